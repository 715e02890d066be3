#include "run_config.hpp"

#include <fstream>
#include <stdexcept>

#include "sft/checkpoint.hpp"

namespace sft::cli {

ModelConfig model_from_kv(const KvConfig& kv) {
    ModelConfig m;
    m.vocab_size = static_cast<int>(kv.get_int("vocab", m.vocab_size));
    m.seq_len = static_cast<int>(kv.get_int("seq", m.seq_len));
    m.d_model = static_cast<int>(kv.get_int("d_model", m.d_model));
    m.ffn_dim = static_cast<int>(kv.get_int("ffn_dim", m.ffn_dim));
    m.n_blocks = static_cast<int>(kv.get_int("blocks", m.n_blocks));
    m.n_heads = static_cast<int>(kv.get_int("heads", m.n_heads));
    m.n_classes = static_cast<int>(kv.get_int("classes", m.n_classes));
    m.validate();
    return m;
}

OptimConfig optim_from_kv(const KvConfig& kv) {
    OptimConfig o;
    const std::string algo = kv.get_str("opt", "adam");
    if (algo == "adam")
        o.algo = OptimConfig::Algo::adam;
    else if (algo == "sgd")
        o.algo = OptimConfig::Algo::sgd;
    else
        throw std::runtime_error("config: opt must be adam or sgd, got '" + algo + "'");
    o.lr = static_cast<float>(kv.get_double("lr", 3e-4));
    o.momentum = static_cast<float>(kv.get_double("momentum", 0.0));
    o.beta1 = static_cast<float>(kv.get_double("beta1", 0.9));
    o.beta2 = static_cast<float>(kv.get_double("beta2", 0.999));
    o.eps = static_cast<float>(kv.get_double("eps", 1e-8));
    return o;
}

RunConfig RunConfig::from_kv(const KvConfig& kv) {
    RunConfig rc;
    rc.model = model_from_kv(kv);
    rc.opt = optim_from_kv(kv);

    rc.plan.split_layer = static_cast<int>(kv.get_int("split_layer", 0));
    rc.plan.rank = static_cast<int>(kv.get_int("rank", 0));
    rc.plan.residual_mode = residual_mode_from_name(kv.get_str("residual", "eliminated"));
    rc.has_plan = rc.plan.rank > 0 || rc.plan.split_layer > 0;
    if (rc.has_plan) rc.plan.validate(rc.model);

    rc.role = kv.get_str("role", rc.role);
    if (rc.role != "local" && rc.role != "loopback" && rc.role != "edge" && rc.role != "cloud")
        throw std::runtime_error("config: role must be local|loopback|edge|cloud, got '" +
                                 rc.role + "'");
    rc.iters = static_cast<int>(kv.get_int("iters", rc.iters));
    if (rc.iters < 0) throw std::runtime_error("config: iters must be >= 0");
    rc.batch = static_cast<int>(kv.get_int("batch", rc.batch));
    if (rc.batch < 1) throw std::runtime_error("config: batch must be >= 1");
    rc.seed = static_cast<uint64_t>(kv.get_int("seed", static_cast<int64_t>(rc.seed)));

    rc.dataset = kv.get_str("dataset", rc.dataset);
    rc.dataset_size = static_cast<int>(kv.get_int("dataset_size", rc.dataset_size));
    rc.dataset_seed = static_cast<uint64_t>(
        kv.get_int("dataset_seed", static_cast<int64_t>(rc.dataset_seed)));

    rc.peer = kv.get_str("peer", "");
    rc.listen = kv.get_str("listen", rc.listen);
    rc.port = static_cast<int>(kv.get_int("port", rc.port));
    rc.connect_timeout_ms = static_cast<int>(kv.get_int("connect_timeout_ms", rc.connect_timeout_ms));
    rc.bandwidth_mbps = kv.get_double("bandwidth_mbps", rc.bandwidth_mbps);

    rc.metrics_out = kv.get_str("metrics_out", rc.metrics_out);
    rc.checkpoint_in = kv.get_str("checkpoint_in", "");
    rc.checkpoint_out = kv.get_str("checkpoint_out", "");

    if (rc.role == "edge" && rc.peer.empty())
        throw std::runtime_error("config: role=edge requires peer=<host>");
    if ((rc.role == "edge" || rc.role == "loopback" || rc.role == "cloud") && !rc.has_plan)
        throw std::runtime_error("config: role=" + rc.role +
                                 " requires a split plan (split_layer and rank)");
    if (rc.has_plan && (rc.role == "edge" || rc.role == "cloud" || rc.role == "loopback") &&
        rc.plan.residual_mode == ResidualMode::kept_local)
        throw std::runtime_error("config: residual=kept_local is valid for role=local only");
    return rc;
}

Dataset RunConfig::load_dataset() const {
    if (dataset == "synthetic") return gen_majority_task(dataset_size, model, dataset_seed);
    return load_csv_dataset(dataset, model);
}

LayerStack RunConfig::assemble_model() const {
    Rng rng(seed);
    LayerStack stack = build_model(model, rng);
    if (!checkpoint_in.empty()) load_checkpoint(stack, checkpoint_in);
    if (has_plan) stack = decompose_ffn(stack, plan);
    return stack;
}

uint64_t RunConfig::session_hash() const {
    uint64_t h = model.hash();
    auto mix = [&h](uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    };
    if (checkpoint_in.empty()) {
        mix(seed);
    } else {
        // both sides must start from the same parameter file
        std::ifstream in(checkpoint_in, std::ios::binary);
        if (!in) throw std::runtime_error("config: cannot open checkpoint " + checkpoint_in);
        char buf[4096];
        while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
            for (std::streamsize i = 0; i < in.gcount(); ++i) {
                h ^= static_cast<uint8_t>(buf[i]);
                h *= 0x100000001b3ULL;
            }
            if (in.eof()) break;
        }
    }
    return h;
}

}  // namespace sft::cli
