#pragma once

#include <optional>
#include <string>

#include "sft/data.hpp"
#include "sft/decompose.hpp"
#include "sft/kvconfig.hpp"
#include "sft/nn.hpp"

namespace sft::cli {

// Everything a run needs, assembled from the flat key=value config. See
// --help for the key list and defaults.
struct RunConfig {
    ModelConfig model;
    SplitPlan plan;       // active iff rank > 0
    bool has_plan = false;
    OptimConfig opt;

    std::string role = "local";  // local | loopback | edge | cloud
    int iters = 300;
    int batch = 32;
    uint64_t seed = 1;

    std::string dataset = "synthetic";  // or a CSV path
    int dataset_size = 2048;
    uint64_t dataset_seed = 1;

    std::string peer;                 // edge: host to connect to
    std::string listen = "0.0.0.0";   // cloud: bind address
    int port = 7631;
    int connect_timeout_ms = 5000;
    double bandwidth_mbps = 0.0;      // 0 = unthrottled

    std::string metrics_out = "metrics.csv";
    std::string checkpoint_in;
    std::string checkpoint_out;

    static RunConfig from_kv(const KvConfig& kv);

    std::optional<double> bandwidth_bps() const {
        return bandwidth_mbps > 0.0 ? std::optional<double>(bandwidth_mbps * 1e6) : std::nullopt;
    }

    Dataset load_dataset() const;

    // build + optional checkpoint load + optional decomposition, the
    // line-1..3 setup shared by every role.
    LayerStack assemble_model() const;

    // Session identity for the handshake: model config, init source, plan.
    uint64_t session_hash() const;
};

ModelConfig model_from_kv(const KvConfig& kv);
OptimConfig optim_from_kv(const KvConfig& kv);

}  // namespace sft::cli
