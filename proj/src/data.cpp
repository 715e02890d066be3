#include "sft/data.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sft {

namespace {

constexpr int kTokenA = 7;
constexpr int kTokenB = 9;

int count_token(const std::vector<int>& seq, int tok) {
    return static_cast<int>(std::count(seq.begin(), seq.end(), tok));
}

}  // namespace

Dataset gen_majority_task(int size, const ModelConfig& cfg, uint64_t seed) {
    if (size < 1) throw std::invalid_argument("gen_majority_task: size must be >= 1");
    if (cfg.vocab_size < 10)
        throw std::invalid_argument("gen_majority_task: vocab_size must be >= 10");
    if (cfg.n_classes < 2)
        throw std::invalid_argument("gen_majority_task: needs at least 2 classes");

    Dataset ds;
    ds.seq_len = cfg.seq_len;
    ds.vocab = cfg.vocab_size;
    ds.seed = seed;
    ds.sequences.reserve(static_cast<size_t>(size));
    ds.labels.reserve(static_cast<size_t>(size));

    Rng rng(seed ^ 0x5f3759df9e3779b9ULL);
    const int max_inject = std::max(1, cfg.seq_len / 4);
    std::vector<int> positions(static_cast<size_t>(cfg.seq_len));

    for (int n = 0; n < size; ++n) {
        std::vector<int> seq(static_cast<size_t>(cfg.seq_len));
        int label = 0;
        while (true) {
            for (int& t : seq) t = static_cast<int>(rng.next_below(static_cast<uint64_t>(cfg.vocab_size)));
            const int ca = static_cast<int>(rng.next_below(static_cast<uint64_t>(max_inject) + 1));
            const int cb = static_cast<int>(rng.next_below(static_cast<uint64_t>(max_inject) + 1));
            // Fisher-Yates over positions, then overwrite the first ca+cb slots.
            for (int i = 0; i < cfg.seq_len; ++i) positions[static_cast<size_t>(i)] = i;
            for (int i = cfg.seq_len - 1; i > 0; --i) {
                const int j = static_cast<int>(rng.next_below(static_cast<uint64_t>(i) + 1));
                std::swap(positions[static_cast<size_t>(i)], positions[static_cast<size_t>(j)]);
            }
            for (int i = 0; i < std::min(ca + cb, cfg.seq_len); ++i)
                seq[static_cast<size_t>(positions[static_cast<size_t>(i)])] =
                    i < ca ? kTokenA : kTokenB;

            const int total_a = count_token(seq, kTokenA);
            const int total_b = count_token(seq, kTokenB);
            if (total_a == total_b) continue;  // tie: re-roll the sample
            label = total_a > total_b ? 1 : 0;
            break;
        }
        ds.sequences.push_back(std::move(seq));
        ds.labels.push_back(label);
    }
    return ds;
}

Dataset load_csv_dataset(const std::string& path, const ModelConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("dataset: cannot open " + path);
    Dataset ds;
    ds.seq_len = cfg.seq_len;
    ds.vocab = cfg.vocab_size;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<int> fields;
        while (std::getline(ss, cell, ',')) fields.push_back(std::stoi(cell));
        if (static_cast<int>(fields.size()) != cfg.seq_len + 1)
            throw std::runtime_error("dataset " + path + " line " + std::to_string(lineno) +
                                     ": expected 1+" + std::to_string(cfg.seq_len) + " fields, got " +
                                     std::to_string(fields.size()));
        const int label = fields[0];
        if (label < 0 || label >= cfg.n_classes)
            throw std::runtime_error("dataset " + path + " line " + std::to_string(lineno) +
                                     ": label " + std::to_string(label) + " out of range");
        for (size_t i = 1; i < fields.size(); ++i)
            if (fields[i] < 0 || fields[i] >= cfg.vocab_size)
                throw std::runtime_error("dataset " + path + " line " + std::to_string(lineno) +
                                         ": token " + std::to_string(fields[i]) + " out of range");
        ds.labels.push_back(label);
        ds.sequences.emplace_back(fields.begin() + 1, fields.end());
    }
    if (ds.sequences.empty()) throw std::runtime_error("dataset " + path + ": empty");
    return ds;
}

void write_csv_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("dataset: cannot open " + path + " for writing");
    for (size_t i = 0; i < ds.size(); ++i) {
        out << ds.labels[i];
        for (int t : ds.sequences[i]) out << ',' << t;
        out << '\n';
    }
    if (!out) throw std::runtime_error("dataset: write failed for " + path);
}

Batcher::Batcher(const Dataset& ds, int batch_size, uint64_t seed)
    : ds_(ds), batch_(batch_size), rng_(seed ^ 0xb5ad4eceda1ce2a9ULL) {
    if (batch_size < 1) throw std::invalid_argument("Batcher: batch size must be >= 1");
    if (ds.size() == 0) throw std::invalid_argument("Batcher: empty dataset");
    reshuffle();
}

void Batcher::reshuffle() {
    order_.resize(ds_.size());
    for (size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    for (size_t i = order_.size() - 1; i > 0; --i) {
        const size_t j = rng_.next_below(i + 1);
        std::swap(order_[i], order_[j]);
    }
    cursor_ = 0;
}

Batch Batcher::next() {
    Batch out;
    out.tokens = Matrix(batch_, ds_.seq_len);
    out.labels.resize(static_cast<size_t>(batch_));
    for (int r = 0; r < batch_; ++r) {
        size_t idx;
        if (cursor_ < order_.size()) {
            idx = order_[cursor_++];
        } else {
            idx = rng_.next_below(ds_.size());  // pad the short tail by resampling
        }
        const auto& seq = ds_.sequences[idx];
        for (int c = 0; c < ds_.seq_len; ++c)
            out.tokens.at(r, c) = static_cast<float>(seq[static_cast<size_t>(c)]);
        out.labels[static_cast<size_t>(r)] = ds_.labels[idx];
    }
    if (cursor_ >= order_.size()) reshuffle();
    return out;
}

}  // namespace sft
