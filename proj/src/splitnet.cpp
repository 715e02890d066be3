#include "sft/splitnet.hpp"

#include <chrono>
#include <cstdio>
#include <cstring>
#include <exception>
#include <fstream>
#include <thread>

#include "sft/log.hpp"

namespace sft {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// METRICS payload: loss f32, batch accuracy f32, cloud compute ms f32.
Frame make_metrics_frame(uint64_t iteration, float loss, float acc, float t_cloud_ms) {
    Frame f;
    f.type = MsgType::metrics;
    f.iteration = iteration;
    f.payload.resize(12);
    std::memcpy(f.payload.data(), &loss, 4);
    std::memcpy(f.payload.data() + 4, &acc, 4);
    std::memcpy(f.payload.data() + 8, &t_cloud_ms, 4);
    return f;
}

void parse_metrics_frame(const Frame& f, TrainMetrics& m) {
    if (f.payload.size() != 12) throw WireError(WireErrc::protocol, "malformed METRICS payload");
    float loss, acc, t_cloud;
    std::memcpy(&loss, f.payload.data(), 4);
    std::memcpy(&acc, f.payload.data() + 4, 4);
    std::memcpy(&t_cloud, f.payload.data() + 8, 4);
    m.loss = loss;
    m.batch_accuracy = acc;
    m.t_cloud_ms = static_cast<double>(t_cloud);
}

}  // namespace

void write_metrics_csv(const std::vector<TrainMetrics>& metrics, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("metrics: cannot open " + path + " for writing");
    out << "iter,loss,acc,bytes_up,bytes_down,t_edge_ms,t_cloud_ms,t_comm_ms\n";
    char line[256];
    for (const auto& m : metrics) {
        std::snprintf(line, sizeof(line), "%llu,%.9g,%.9g,%llu,%llu,%.3f,%.3f,%.3f\n",
                      static_cast<unsigned long long>(m.iteration), m.loss, m.batch_accuracy,
                      static_cast<unsigned long long>(m.bytes_up),
                      static_cast<unsigned long long>(m.bytes_down), m.t_edge_ms, m.t_cloud_ms,
                      m.t_comm_ms);
        out << line;
    }
    if (!out) throw std::runtime_error("metrics: write failed for " + path);
}

PartitionedModel partition(const LayerStack& stack, const SplitPlan& plan) {
    plan.validate(stack.cfg);
    if (plan.residual_mode == ResidualMode::kept_local)
        throw std::invalid_argument("partition: kept_local plans are local-simulation only");

    const std::string ffn1_name = "ffn1." + std::to_string(plan.split_layer);
    const int ffn1_idx = stack.find_layer(ffn1_name);
    if (ffn1_idx < 0)
        throw std::invalid_argument("partition: stack is not decomposed at block " +
                                    std::to_string(plan.split_layer) +
                                    " (run decompose_ffn with the same plan first)");
    const Layer& ffn1 = stack.layers[static_cast<size_t>(ffn1_idx)];
    if (ffn1.param("w").value.cols != plan.rank)
        throw std::invalid_argument("partition: decomposition rank " +
                                    std::to_string(ffn1.param("w").value.cols) +
                                    " does not match plan rank " + std::to_string(plan.rank));
    const std::string res2_name = "blk" + std::to_string(plan.split_layer) + ".res2";
    const bool has_res2 = stack.find_layer(res2_name) >= 0;
    if (plan.residual_mode == ResidualMode::eliminated && has_res2)
        throw std::invalid_argument("partition: plan says eliminated but " + res2_name +
                                    " is still present");
    if (plan.residual_mode == ResidualMode::kept_with_transfer && !has_res2)
        throw std::invalid_argument("partition: plan keeps the residual but " + res2_name +
                                    " is missing");

    PartitionedModel out{stack.slice(0, ffn1_idx + 1),
                         stack.slice(ffn1_idx + 1, static_cast<int>(stack.layers.size())), plan};
    return out;
}

std::vector<TrainMetrics> run_local(LayerStack& stack, const Dataset& ds, int iters,
                                    OptimState& opt, int batch, uint64_t batch_seed) {
    std::vector<TrainMetrics> metrics;
    if (iters <= 0) return metrics;
    metrics.reserve(static_cast<size_t>(iters));
    Batcher batcher(ds, batch, batch_seed);
    for (int i = 0; i < iters; ++i) {
        const auto t0 = Clock::now();
        const Batch b = batcher.next();
        const Matrix logits = stack.forward(b.tokens);
        const auto [loss, d_logits] = cross_entropy(logits, b.labels);
        stack.backward(d_logits);
        optimizer_step(stack, opt);

        TrainMetrics m;
        m.iteration = static_cast<uint64_t>(i) + 1;
        m.loss = loss;
        m.batch_accuracy = batch_accuracy(logits, b.labels);
        m.t_edge_ms = ms_since(t0);
        metrics.push_back(m);
    }
    return metrics;
}

TrainMetrics edge_iteration(LayerStack& net1, OptimState& opt, const Batch& batch,
                            FrameChannel& chan, uint64_t iteration, const SplitPlan& plan) {
    const uint64_t sent0 = chan.bytes_sent();
    const uint64_t recv0 = chan.bytes_received();
    const auto iter0 = Clock::now();

    auto t0 = Clock::now();
    const Matrix activation = net1.forward(batch.tokens);
    double t_edge = ms_since(t0);

    chan.send(make_matrix_frame(MsgType::activation, iteration, activation));
    if (plan.residual_mode == ResidualMode::kept_with_transfer) {
        const std::string up_name = "blk" + std::to_string(plan.split_layer) + ".up";
        chan.send(make_matrix_frame(MsgType::residual, iteration, net1.activation_input(up_name)));
    }
    chan.send(make_labels_frame(iteration, batch.labels));

    const Frame grad_frame = chan.expect(MsgType::gradient, iteration);
    Matrix d_activation = matrix_from_frame(grad_frame);
    if (d_activation.rows != activation.rows || d_activation.cols != activation.cols)
        throw WireError(WireErrc::protocol, "GRADIENT shape " + d_activation.shape_str() +
                                                " does not match activation " +
                                                activation.shape_str());
    if (plan.residual_mode == ResidualMode::kept_with_transfer) {
        const Frame res_frame = chan.expect(MsgType::residual, iteration);
        const std::string up_name = "blk" + std::to_string(plan.split_layer) + ".up";
        net1.inject_grad(up_name, matrix_from_frame(res_frame));
    }

    t0 = Clock::now();
    net1.backward(d_activation);
    optimizer_step(net1, opt);
    t_edge += ms_since(t0);

    TrainMetrics m;
    m.iteration = iteration;
    parse_metrics_frame(chan.expect(MsgType::metrics, iteration), m);
    m.bytes_up = chan.bytes_sent() - sent0;
    m.bytes_down = chan.bytes_received() - recv0;
    m.t_edge_ms = t_edge;
    m.t_comm_ms = std::max(0.0, ms_since(iter0) - t_edge - m.t_cloud_ms);
    return m;
}

std::optional<TrainMetrics> cloud_iteration(LayerStack& net2, OptimState& opt, FrameChannel& chan,
                                            uint64_t iteration, const SplitPlan& plan) {
    const uint64_t sent0 = chan.bytes_sent();
    const uint64_t recv0 = chan.bytes_received();
    const auto iter0 = Clock::now();

    Frame act_frame = chan.recv();
    if (act_frame.type == MsgType::shutdown) return std::nullopt;
    if (act_frame.type != MsgType::activation)
        throw WireError(WireErrc::protocol, "expected ACTIVATION, got " +
                                                std::string(msg_type_name(act_frame.type)));
    if (act_frame.iteration != iteration)
        throw WireError(WireErrc::protocol,
                        "ACTIVATION iteration " + std::to_string(act_frame.iteration) +
                            " out of order (expected " + std::to_string(iteration) + ")");
    Matrix activation = matrix_from_frame(act_frame);
    if (plan.residual_mode == ResidualMode::kept_with_transfer) {
        const Frame res_frame = chan.expect(MsgType::residual, iteration);
        net2.set_aux_input(matrix_from_frame(res_frame));
    }
    const std::vector<int> labels = labels_from_frame(chan.expect(MsgType::labels, iteration));
    for (int y : labels)
        if (y < 0 || y >= net2.cfg.n_classes)
            throw std::invalid_argument("cloud: label " + std::to_string(y) +
                                        " out of range [0, " +
                                        std::to_string(net2.cfg.n_classes) + ")");

    auto t0 = Clock::now();
    const Matrix logits = net2.forward(activation);
    const auto [loss, d_logits] = cross_entropy(logits, labels);
    const float acc = batch_accuracy(logits, labels);
    const Matrix d_activation = net2.backward(d_logits);
    double t_cloud = ms_since(t0);

    chan.send(make_matrix_frame(MsgType::gradient, iteration, d_activation));
    if (plan.residual_mode == ResidualMode::kept_with_transfer)
        chan.send(make_matrix_frame(MsgType::residual, iteration, net2.aux_grad()));

    t0 = Clock::now();
    optimizer_step(net2, opt);
    t_cloud += ms_since(t0);

    chan.send(make_metrics_frame(iteration, loss, acc, static_cast<float>(t_cloud)));

    TrainMetrics m;
    m.iteration = iteration;
    m.loss = loss;
    m.batch_accuracy = acc;
    m.bytes_up = chan.bytes_sent() - sent0;
    m.bytes_down = chan.bytes_received() - recv0;
    m.t_cloud_ms = t_cloud;
    m.t_comm_ms = std::max(0.0, ms_since(iter0) - t_cloud);
    return m;
}

std::vector<TrainMetrics> run_cloud_loop(LayerStack& net2, OptimState& opt, FrameChannel& chan,
                                         const SplitPlan& plan) {
    std::vector<TrainMetrics> metrics;
    uint64_t iteration = 1;
    while (true) {
        try {
            auto m = cloud_iteration(net2, opt, chan, iteration, plan);
            if (!m) break;  // SHUTDOWN
            metrics.push_back(*m);
        } catch (const TransportClosed&) {
            log_info("cloud: transport closed after %zu iterations", metrics.size());
            break;
        }
        ++iteration;
    }
    return metrics;
}

std::vector<TrainMetrics> run_edge_loop(LayerStack& net1, OptimState& opt, const Dataset& ds,
                                        int iters, int batch, uint64_t batch_seed,
                                        FrameChannel& chan, const SplitPlan& plan) {
    std::vector<TrainMetrics> metrics;
    if (iters > 0) {
        metrics.reserve(static_cast<size_t>(iters));
        Batcher batcher(ds, batch, batch_seed);
        for (int i = 0; i < iters; ++i) {
            const Batch b = batcher.next();
            metrics.push_back(
                edge_iteration(net1, opt, b, chan, static_cast<uint64_t>(i) + 1, plan));
            log_debug("edge iter %d loss %.6f", i + 1, metrics.back().loss);
        }
    }
    Frame bye;
    bye.type = MsgType::shutdown;
    bye.iteration = static_cast<uint64_t>(iters);
    chan.send(bye);
    return metrics;
}

SplitRunResult run_split_loopback(const LayerStack& decomposed, const SplitPlan& plan,
                                  const Dataset& ds, int iters, const OptimConfig& opt_cfg,
                                  int batch, uint64_t batch_seed,
                                  std::optional<double> bandwidth_bps) {
    PartitionedModel parts = partition(decomposed, plan);
    auto [edge_t, cloud_t] = make_loopback_pair();

    SessionConfig session;
    session.config_hash = decomposed.cfg.hash();
    session.plan = plan;
    session.batch = static_cast<uint32_t>(batch);
    session.seq = static_cast<uint32_t>(decomposed.cfg.seq_len);

    SplitRunResult result;
    std::exception_ptr cloud_error;
    std::thread cloud([&] {
        try {
            FrameChannel chan(*cloud_t, bandwidth_bps);
            handshake_cloud(chan, session);
            OptimState opt(opt_cfg);
            result.cloud = run_cloud_loop(parts.net2, opt, chan, plan);
        } catch (...) {
            cloud_error = std::current_exception();
            cloud_t->close();
        }
    });

    try {
        FrameChannel chan(*edge_t, bandwidth_bps);
        handshake_edge(chan, session);
        OptimState opt(opt_cfg);
        result.edge = run_edge_loop(parts.net1, opt, ds, iters, batch, batch_seed, chan, plan);
    } catch (...) {
        edge_t->close();
        cloud.join();
        throw;
    }
    cloud.join();
    if (cloud_error) std::rethrow_exception(cloud_error);
    result.trained = std::move(parts);
    return result;
}

}  // namespace sft
