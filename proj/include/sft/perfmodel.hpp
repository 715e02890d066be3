#pragma once

#include <cstdint>
#include <optional>

namespace sft {

// Analytic per-iteration time model. Per-layer times are inputs (measured
// elsewhere), communication time comes from volume and bandwidth unless a
// direct override is given.
struct PerfParams {
    double t_edge_layer_ms = 0.0;
    double t_cloud_layer_ms = 0.0;
    int n_edge_layers = 0;
    int n_cloud_layers = 0;
    uint64_t volume_bytes = 0;   // exchanged per iteration
    double bandwidth_bps = 0.0;  // 0 = unset
    std::optional<double> t_comm_override_ms;

    void validate() const;
};

enum class PerfMode { naive, sl, sft };

const char* perf_mode_name(PerfMode m);

// batch * seq * width * bytes_per_elem.
uint64_t comm_volume(uint64_t batch, uint64_t seq, uint64_t width, uint64_t bytes_per_elem = 4);

// naive: everything runs on the edge. sl/sft: edge layers + cloud layers +
// communication, t_comm = override if set else volume*8/bandwidth.
double estimate_iter_ms(PerfMode mode, const PerfParams& p);

struct BreakevenResult {
    bool beneficial = false;    // false: compute terms alone already exceed t_naive
    double bandwidth_bps = 0.0;  // minimal bandwidth making t_sft == t_naive
};

// Inverts the linear comm term; rejects parameter sets whose override makes
// bandwidth irrelevant.
BreakevenResult breakeven_bandwidth(const PerfParams& p, double t_naive_ms);

}  // namespace sft
