#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sft/matrix.hpp"
#include "sft/nn.hpp"

namespace sft {

// Synthetic desk-scale classification data: fixed-length token sequences with
// class labels. Deterministic for (seed, size).
struct Dataset {
    std::vector<std::vector<int>> sequences;  // each seq_len long, ids < vocab
    std::vector<int> labels;
    int seq_len = 0;
    int vocab = 0;
    uint64_t seed = 0;

    size_t size() const { return sequences.size(); }
};

// Majority-count task: uniform random tokens with extra copies of tokens 7
// and 9 injected; label is 1 iff token 7 occurs more often than token 9
// (ties re-rolled). Needs cross-position aggregation, trains in seconds.
Dataset gen_majority_task(int size, const ModelConfig& cfg, uint64_t seed);

// CSV rows "label,tok0,tok1,...".
Dataset load_csv_dataset(const std::string& path, const ModelConfig& cfg);
void write_csv_dataset(const Dataset& ds, const std::string& path);

struct Batch {
    Matrix tokens;  // B x seq_len token ids
    std::vector<int> labels;
};

// Seeded epoch shuffling; a short final batch is padded by resampling, so
// every epoch covers the whole dataset. Yields batches forever.
class Batcher {
  public:
    Batcher(const Dataset& ds, int batch_size, uint64_t seed);
    Batch next();

  private:
    const Dataset& ds_;
    int batch_;
    Rng rng_;
    std::vector<size_t> order_;
    size_t cursor_ = 0;

    void reshuffle();
};

}  // namespace sft
