#include "sft/perfmodel.hpp"

#include <stdexcept>
#include <string>

namespace sft {

void PerfParams::validate() const {
    if (t_edge_layer_ms < 0.0 || t_cloud_layer_ms < 0.0 || bandwidth_bps < 0.0 ||
        n_edge_layers < 0 || n_cloud_layers < 0)
        throw std::invalid_argument("PerfParams: all parameters must be non-negative");
    if (t_comm_override_ms && *t_comm_override_ms < 0.0)
        throw std::invalid_argument("PerfParams: t_comm_override_ms must be non-negative");
}

const char* perf_mode_name(PerfMode m) {
    switch (m) {
        case PerfMode::naive: return "naive";
        case PerfMode::sl: return "sl";
        case PerfMode::sft: return "sft";
    }
    return "?";
}

uint64_t comm_volume(uint64_t batch, uint64_t seq, uint64_t width, uint64_t bytes_per_elem) {
    return batch * seq * width * bytes_per_elem;
}

double estimate_iter_ms(PerfMode mode, const PerfParams& p) {
    p.validate();
    if (mode == PerfMode::naive)
        return p.t_edge_layer_ms * (p.n_edge_layers + p.n_cloud_layers);

    const double compute =
        p.t_edge_layer_ms * p.n_edge_layers + p.t_cloud_layer_ms * p.n_cloud_layers;
    double t_comm;
    if (p.t_comm_override_ms) {
        t_comm = *p.t_comm_override_ms;
    } else {
        if (p.bandwidth_bps <= 0.0)
            throw std::invalid_argument(
                "estimate: bandwidth is zero and no t_comm override is set");
        t_comm = static_cast<double>(p.volume_bytes) * 8.0 / p.bandwidth_bps * 1000.0;
    }
    return compute + t_comm;
}

BreakevenResult breakeven_bandwidth(const PerfParams& p, double t_naive_ms) {
    p.validate();
    if (p.t_comm_override_ms)
        throw std::invalid_argument(
            "breakeven_bandwidth: t_comm override makes bandwidth irrelevant");
    const double compute =
        p.t_edge_layer_ms * p.n_edge_layers + p.t_cloud_layer_ms * p.n_cloud_layers;
    if (compute >= t_naive_ms) return {false, 0.0};
    const double t_comm_budget_s = (t_naive_ms - compute) / 1000.0;
    return {true, static_cast<double>(p.volume_bytes) * 8.0 / t_comm_budget_s};
}

}  // namespace sft
