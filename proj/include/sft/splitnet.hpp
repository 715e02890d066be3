#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sft/data.hpp"
#include "sft/decompose.hpp"
#include "sft/nn.hpp"
#include "sft/wire.hpp"

namespace sft {

struct TrainMetrics {
    uint64_t iteration = 0;
    float loss = 0.0f;
    float batch_accuracy = 0.0f;
    uint64_t bytes_up = 0;
    uint64_t bytes_down = 0;
    double t_edge_ms = 0.0;
    double t_cloud_ms = 0.0;
    double t_comm_ms = 0.0;
};

// CSV with header iter,loss,acc,bytes_up,bytes_down,t_edge_ms,t_cloud_ms,t_comm_ms.
void write_metrics_csv(const std::vector<TrainMetrics>& metrics, const std::string& path);

struct PartitionedModel {
    LayerStack net1;  // embedding ... block-l attention sublayer, LinearUp, GELU, FFN-1
    LayerStack net2;  // FFN-2, FFN-3 (residual, LayerNorm), blocks l+1..L, classifier
    SplitPlan plan;
};

// Splits a decomposed stack immediately after ffn1.<l>. The plan must match
// the decomposition; kept_local plans cannot be partitioned.
PartitionedModel partition(const LayerStack& stack, const SplitPlan& plan);

// Plain single-process training loop; the reference for both accuracy and the
// split-equals-local equivalence checks.
std::vector<TrainMetrics> run_local(LayerStack& stack, const Dataset& ds, int iters,
                                    OptimState& opt, int batch, uint64_t batch_seed);

// One Algorithm-1 iteration from the edge side: forward net1, send activation
// (+residual tap) and labels, block for the gradient, backward, step.
TrainMetrics edge_iteration(LayerStack& net1, OptimState& opt, const Batch& batch,
                            FrameChannel& chan, uint64_t iteration, const SplitPlan& plan);

// One Algorithm-1 iteration from the cloud side: receive activation and
// labels, forward net2, loss, backward, send the activation gradient, step,
// send metrics. Returns nothing when the edge sent SHUTDOWN instead.
std::optional<TrainMetrics> cloud_iteration(LayerStack& net2, OptimState& opt, FrameChannel& chan,
                                            uint64_t iteration, const SplitPlan& plan);

// Full edge-side run: handshake already done; sends SHUTDOWN when finished.
std::vector<TrainMetrics> run_edge_loop(LayerStack& net1, OptimState& opt, const Dataset& ds,
                                        int iters, int batch, uint64_t batch_seed,
                                        FrameChannel& chan, const SplitPlan& plan);

// Full cloud-side run: iterates until SHUTDOWN (or the transport closes).
std::vector<TrainMetrics> run_cloud_loop(LayerStack& net2, OptimState& opt, FrameChannel& chan,
                                         const SplitPlan& plan);

struct SplitRunResult {
    std::vector<TrainMetrics> edge;
    std::vector<TrainMetrics> cloud;
    PartitionedModel trained;  // the halves after the run
};

// Executes the split protocol over an in-memory transport (edge on the
// calling thread, cloud on a worker). Loss traces are bit-identical to
// run_local on the same decomposed stack.
SplitRunResult run_split_loopback(const LayerStack& decomposed, const SplitPlan& plan,
                                  const Dataset& ds, int iters, const OptimConfig& opt_cfg,
                                  int batch, uint64_t batch_seed,
                                  std::optional<double> bandwidth_bps = std::nullopt);

}  // namespace sft
