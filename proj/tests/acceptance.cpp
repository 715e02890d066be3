// Acceptance suite: one line per criterion, every tolerance pinned in code.
// Exits nonzero if any criterion fails its check or its runtime budget.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <thread>
#include <vector>

#include "sft/checkpoint.hpp"
#include "sft/perfmodel.hpp"
#include "sft/splitnet.hpp"
#include "support/gradcheck.hpp"

using namespace sft;

namespace {

using Clock = std::chrono::steady_clock;

int g_failures = 0;

struct Check {
    std::string label;
    std::vector<std::string> problems;

    void expect(bool ok, const std::string& what) {
        if (!ok) problems.push_back(what);
    }
};

void run_criterion(int number, const std::string& label, double budget_s,
                   const std::function<void(Check&)>& body) {
    Check check{label, {}};
    const auto t0 = Clock::now();
    try {
        body(check);
    } catch (const std::exception& e) {
        check.problems.push_back(std::string("exception: ") + e.what());
    }
    const double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
    if (elapsed > budget_s)
        check.problems.push_back("runtime " + std::to_string(elapsed) + "s over budget " +
                                 std::to_string(budget_s) + "s");
    if (check.problems.empty()) {
        std::printf("[PASS] %d. %s (%.1fs)\n", number, label.c_str(), elapsed);
    } else {
        ++g_failures;
        std::printf("[FAIL] %d. %s (%.1fs)\n", number, label.c_str(), elapsed);
        for (const auto& p : check.problems) std::printf("       - %s\n", p.c_str());
    }
    std::fflush(stdout);
}

ModelConfig default_config() { return ModelConfig{}; }  // the desk-scale defaults

double mean_final_accuracy(const std::vector<TrainMetrics>& trace, size_t window = 20) {
    double acc = 0.0;
    const size_t n = std::min(window, trace.size());
    for (size_t i = trace.size() - n; i < trace.size(); ++i) acc += trace[i].batch_accuracy;
    return acc / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// criteria
// ---------------------------------------------------------------------------

void criterion_perfmodel(Check& c) {
    PerfParams naive;
    naive.t_edge_layer_ms = 62.0;
    naive.n_edge_layers = 12;
    c.expect(std::fabs(estimate_iter_ms(PerfMode::naive, naive) - 744.0) <= 0.1,
             "naive != 744.0 ms");

    PerfParams sl;
    sl.t_edge_layer_ms = 60.3;
    sl.t_cloud_layer_ms = 10.3;
    sl.n_edge_layers = 10;
    sl.n_cloud_layers = 2;
    sl.t_comm_override_ms = 2300.0;
    c.expect(std::fabs(estimate_iter_ms(PerfMode::sl, sl) - 2923.6) <= 0.1, "sl != 2923.6 ms");

    PerfParams sft = sl;
    sft.t_comm_override_ms = 24.0;
    c.expect(std::fabs(estimate_iter_ms(PerfMode::sft, sft) - 647.6) <= 0.1, "sft != 647.6 ms");

    // the CLI surface agrees
    const std::string cmd = std::string(SFT_BIN_PATH) + " estimate --config " + SFT_CONFIG_DIR +
                            "/bert_estimate.cfg > acceptance_estimate.txt";
    const int status = std::system(cmd.c_str());
    c.expect(WIFEXITED(status) && WEXITSTATUS(status) == 0, "estimate subcommand failed");
    std::ifstream in("acceptance_estimate.txt");
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    for (const char* needle : {"744.0", "2923.6", "647.6"})
        c.expect(text.find(needle) != std::string::npos,
                 std::string("estimate output missing ") + needle);
}

void criterion_volume_law(Check& c) {
    c.expect(comm_volume(32, 3076, 768) == 302383104ULL, "comm_volume(32,3076,768) wrong");
    c.expect(comm_volume(32, 3076, 768) / comm_volume(32, 3076, 8) == 96,
             "arithmetic 96x reduction violated");

    const ModelConfig cfg = default_config();  // d=32, seq=16
    const Dataset ds = gen_majority_task(256, cfg, 3);
    const int batch = 32;

    auto measure_bytes = [&](int rank) {
        const SplitPlan plan{3, rank, ResidualMode::eliminated};
        Rng rng(5);
        const LayerStack dec = decompose_ffn(build_model(cfg, rng), plan);
        const SplitRunResult res = run_split_loopback(dec, plan, ds, 2, OptimConfig{}, batch, 7);
        return res.edge.back().bytes_up;
    };

    const uint64_t up_r8 = measure_bytes(8);
    const uint64_t labels_bytes = 26 + 32 * 4;  // LABELS frame
    const uint64_t activation_payload = up_r8 - 30 - labels_bytes;
    c.expect(activation_payload == 32ULL * 16 * 8 * 4,
             "ACTIVATION payload != 16384 bytes (got " + std::to_string(activation_payload) + ")");

    const uint64_t up_r32 = measure_bytes(32);  // unsplit-width baseline
    const uint64_t payload_r32 = up_r32 - 30 - labels_bytes;
    c.expect(payload_r32 * 1 == activation_payload * 4,
             "payload-level reduction factor != 4.0 exactly");
    const double header_ratio = static_cast<double>(up_r32) / static_cast<double>(up_r8);
    c.expect(std::fabs(header_ratio - 4.0) / 4.0 <= 0.02,
             "with headers: ratio " + std::to_string(header_ratio) + " off 4.0 by > 2%");
}

void criterion_equivalence(Check& c) {
    const ModelConfig cfg = default_config();
    const SplitPlan plan{3, 8, ResidualMode::eliminated};
    const Dataset ds = gen_majority_task(512, cfg, 11);
    const int iters = 50, batch = 32;
    const uint64_t batch_seed = 13;

    Rng rng(17);
    const LayerStack dec = decompose_ffn(build_model(cfg, rng), plan);

    LayerStack local = dec;
    OptimState opt{OptimConfig{}};
    const auto local_trace = run_local(local, ds, iters, opt, batch, batch_seed);

    const SplitRunResult loop =
        run_split_loopback(dec, plan, ds, iters, OptimConfig{}, batch, batch_seed);

    PartitionedModel parts = partition(dec, plan);
    SessionConfig session;
    session.config_hash = cfg.hash();
    session.plan = plan;
    session.batch = batch;
    session.seq = static_cast<uint32_t>(cfg.seq_len);
    std::vector<TrainMetrics> sock_trace;
    const int port = 18761;
    std::thread cloud([&] {
        auto t = TcpTransport::listen_accept_one("127.0.0.1", port);
        FrameChannel chan(*t);
        handshake_cloud(chan, session);
        OptimState copt{OptimConfig{}};
        run_cloud_loop(parts.net2, copt, chan, plan);
    });
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    auto t = TcpTransport::connect("127.0.0.1", port, 3000);
    FrameChannel chan(*t);
    handshake_edge(chan, session);
    OptimState eopt{OptimConfig{}};
    sock_trace = run_edge_loop(parts.net1, eopt, ds, iters, batch, batch_seed, chan, plan);
    cloud.join();

    c.expect(local_trace.size() == static_cast<size_t>(iters), "local trace truncated");
    c.expect(loop.edge.size() == static_cast<size_t>(iters), "loopback trace truncated");
    c.expect(sock_trace.size() == static_cast<size_t>(iters), "socket trace truncated");
    for (int i = 0; i < iters; ++i) {
        const size_t k = static_cast<size_t>(i);
        if (loop.edge[k].loss != local_trace[k].loss) {
            c.expect(false, "loopback loss differs from local at iter " + std::to_string(i + 1));
            break;
        }
        if (sock_trace[k].loss != local_trace[k].loss) {
            c.expect(false, "socket loss differs from local at iter " + std::to_string(i + 1));
            break;
        }
    }
}

void criterion_full_rank_fidelity(Check& c) {
    const ModelConfig cfg = default_config();
    Rng rng(23);
    LayerStack model = build_model(cfg, rng);
    const int full = std::min(cfg.d_model, cfg.ffn_dim);
    LayerStack dec = decompose_ffn(model, SplitPlan{2, full, ResidualMode::kept_local});

    Rng data_rng(29);
    for (int trial = 0; trial < 10; ++trial) {
        Matrix tokens(8, cfg.seq_len);
        for (float& v : tokens.data)
            v = static_cast<float>(data_rng.next_below(static_cast<uint64_t>(cfg.vocab_size)));
        const Matrix a = model.forward(tokens);
        const Matrix b = dec.forward(tokens);
        const double err = relative_frobenius_error(b, a);
        if (err >= 1e-4) {
            c.expect(false, "batch " + std::to_string(trial) + ": relative error " +
                                std::to_string(err));
            return;
        }
    }
}

void criterion_svd_suite(Check& c) {
    Rng shape_rng(31);
    int checked = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int rows = static_cast<int>(shape_rng.next_below(64)) + 1;
        const int cols = static_cast<int>(shape_rng.next_below(256)) + 1;
        Rng fill_rng(1000 + static_cast<uint64_t>(trial));
        const Matrix w = seeded_fill(rows, cols, Dist::normal(0.0f, 1.0f), fill_rng);
        const SvdResult s = svd(w);

        // orthogonality in 64-bit
        auto defect_cols = [](const Matrix& m) {
            double worst = 0.0;
            for (int a = 0; a < m.cols; ++a)
                for (int b = a; b < m.cols; ++b) {
                    double acc = 0.0;
                    for (int i = 0; i < m.rows; ++i)
                        acc += static_cast<double>(m.at(i, a)) * static_cast<double>(m.at(i, b));
                    worst = std::max(worst, std::fabs(acc - (a == b ? 1.0 : 0.0)));
                }
            return worst;
        };
        if (defect_cols(s.u) >= 1e-6 || defect_cols(transpose(s.v)) >= 1e-6) {
            c.expect(false, "orthogonality defect at trial " + std::to_string(trial));
            return;
        }
        for (size_t i = 1; i < s.sigma.size(); ++i)
            if (s.sigma[i - 1] < s.sigma[i]) {
                c.expect(false, "sigma not descending at trial " + std::to_string(trial));
                return;
            }

        // Eckart-Young identity at a random truncation rank
        const int r = static_cast<int>(shape_rng.next_below(static_cast<uint64_t>(s.rank()))) + 1;
        const Matrix approx = truncate(s, r).reconstruct();
        double err2 = 0.0;
        for (size_t i = 0; i < w.data.size(); ++i) {
            const double d = static_cast<double>(w.data[i]) - approx.data[i];
            err2 += d * d;
        }
        double tail2 = 0.0;
        for (int i = r; i < s.rank(); ++i) tail2 += s.sigma[static_cast<size_t>(i)] *
                                                    s.sigma[static_cast<size_t>(i)];
        const double lhs = std::sqrt(err2), rhs = std::sqrt(tail2);
        if (std::fabs(lhs - rhs) > 1e-5 * std::max(1.0, rhs)) {
            c.expect(false, "Eckart-Young mismatch at trial " + std::to_string(trial) + ": " +
                                std::to_string(lhs) + " vs " + std::to_string(rhs));
            return;
        }

        if (trial % 10 == 0) {  // determinism spot checks
            const SvdResult again = svd(w);
            if (again.u.data != s.u.data || again.sigma != s.sigma || again.v.data != s.v.data) {
                c.expect(false, "nondeterministic svd at trial " + std::to_string(trial));
                return;
            }
        }
        ++checked;
    }
    c.expect(checked == 100, "expected 100 matrices");
}

void criterion_gradients(Check& c) {
    const gradcheck::Result res = gradcheck::run(10);
    for (const auto& f : res.failures) c.expect(false, f);
    for (const char* kind : {"embedding", "attention", "layer_norm", "linear_up", "linear_down",
                             "classifier", "ffn1", "ffn2", "ffn3"})
        c.expect(res.kinds.count(kind) == 1, std::string("layer kind not covered: ") + kind);
}

void criterion_convergence(Check& c) {
    const ModelConfig cfg = default_config();
    const Dataset ds = gen_majority_task(2048, cfg, 1);
    const int iters = 150, batch = 32;
    const std::vector<uint64_t> seeds = {101, 102, 103, 104, 105};
    const int split_ref = cfg.n_blocks - 1;  // l = L-1

    // split-layer sweep CSV (qualitative trend artifact) built along the way
    std::ofstream sweep("acceptance_split_sweep.csv");
    sweep << "split_layer,seed,final_acc\n";

    double base_mean = 0.0, sft_mean = 0.0, l1_mean = 0.0;
    for (const uint64_t seed : seeds) {
        Rng rng(seed);
        const LayerStack base = build_model(cfg, rng);

        LayerStack local = base;
        OptimState opt{OptimConfig{}};
        base_mean += mean_final_accuracy(run_local(local, ds, iters, opt, batch, seed));

        for (int l = 1; l <= cfg.n_blocks; ++l) {
            const SplitPlan plan{l, 8, ResidualMode::eliminated};
            const LayerStack dec = decompose_ffn(base, plan);
            const SplitRunResult res =
                run_split_loopback(dec, plan, ds, iters, OptimConfig{}, batch, seed);
            const double acc = mean_final_accuracy(res.edge);
            sweep << l << "," << seed << "," << acc << "\n";
            if (l == split_ref) sft_mean += acc;
            if (l == 1) l1_mean += acc;
        }
    }
    base_mean /= static_cast<double>(seeds.size());
    sft_mean /= static_cast<double>(seeds.size());
    l1_mean /= static_cast<double>(seeds.size());

    c.expect(sft_mean >= base_mean - 0.02,
             "SFT(l=L-1, R=8) mean accuracy " + std::to_string(sft_mean) +
                 " more than 2 points under baseline " + std::to_string(base_mean));

    // trend report (not a hard gate): lower split layer should not do better
    if (l1_mean > sft_mean + 0.01)
        std::printf("       note: split-layer trend reversed on this run (l=1 mean %.4f vs "
                    "l=%d mean %.4f); reported, not failed\n",
                    l1_mean, split_ref, sft_mean);
    std::printf("       baseline %.4f | sft(l=%d) %.4f | sft(l=1) %.4f | sweep in "
                "acceptance_split_sweep.csv\n",
                base_mean, split_ref, sft_mean, l1_mean);
}

void criterion_throttle(Check& c) {
    // 1 MB at 8 Mbps: elapsed in [1.0, 1.15] s
    {
        auto [a, b] = make_loopback_pair();
        FrameChannel sender(*a, 8e6);
        std::thread drain([&] {
            FrameChannel receiver(*b);
            receiver.recv();
        });
        Frame f;
        f.type = MsgType::activation;
        f.dims = {512, 512};
        f.payload.assign(1024 * 1024, 0x3c);
        const auto t0 = Clock::now();
        sender.send(f);
        const double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
        drain.join();
        c.expect(elapsed >= 1.0, "1MB at 8Mbps took " + std::to_string(elapsed) + "s < 1.0s");
        c.expect(elapsed <= 1.15, "1MB at 8Mbps took " + std::to_string(elapsed) + "s > 1.15s");
    }

    // 16,384-byte frame at 100 Mbps: within 30% of bytes*8/bandwidth plus a
    // small fixed scheduling overhead
    {
        auto [a, b] = make_loopback_pair();
        FrameChannel sender(*a, 100e6);
        std::thread drain([&] {
            FrameChannel receiver(*b);
            receiver.recv();
        });
        Frame f;
        f.type = MsgType::activation;
        f.dims = {512, 8};
        f.payload.assign(16384, 0x11);
        const auto t0 = Clock::now();
        const size_t wire = sender.send(f);
        const double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
        drain.join();
        const double expected = static_cast<double>(wire) * 8.0 / 100e6;
        c.expect(elapsed >= expected,
                 "throttled send finished before the bandwidth allows (" +
                     std::to_string(elapsed) + "s < " + std::to_string(expected) + "s)");
        c.expect(elapsed <= expected * 1.3 + 0.002,
                 "throttled send took " + std::to_string(elapsed) + "s, expected about " +
                     std::to_string(expected) + "s");
    }
}

void criterion_wire_robustness(Check& c) {
    Rng rng(37);
    for (int i = 0; i < 1000; ++i) {
        Frame f;
        const MsgType kinds[] = {MsgType::activation, MsgType::gradient, MsgType::residual,
                                 MsgType::labels, MsgType::metrics, MsgType::hello,
                                 MsgType::config_ack, MsgType::shutdown};
        f.type = kinds[rng.next_below(8)];
        f.iteration = rng.next_u64() % 1000000;
        const int ndim = static_cast<int>(rng.next_below(4));
        for (int d = 0; d < ndim; ++d)
            f.dims.push_back(static_cast<uint32_t>(rng.next_below(64) + 1));
        f.payload.resize(rng.next_below(513));
        for (auto& byte : f.payload) byte = static_cast<uint8_t>(rng.next_below(256));

        const auto bytes = encode_frame(f);
        const Frame g = decode_frame(bytes);
        if (encode_frame(g) != bytes || g.type != f.type || g.iteration != f.iteration ||
            g.dims != f.dims || g.payload != f.payload) {
            c.expect(false, "round-trip mismatch at frame " + std::to_string(i));
            return;
        }

        if (!f.payload.empty()) {
            auto corrupted = bytes;
            const size_t payload_off = 14 + 4 * f.dims.size() + 4;
            corrupted[payload_off + rng.next_below(f.payload.size())] ^= 0x80;
            try {
                decode_frame(corrupted);
                c.expect(false, "corruption not detected at frame " + std::to_string(i));
                return;
            } catch (const WireError& e) {
                if (e.kind() != WireErrc::checksum_mismatch) {
                    c.expect(false, "corruption raised the wrong error kind");
                    return;
                }
            }
        }

        auto cut = bytes;
        cut.resize(bytes.size() - 1 - rng.next_below(std::min<size_t>(bytes.size() - 1, 8)));
        try {
            decode_frame(cut);
            c.expect(false, "truncation not detected at frame " + std::to_string(i));
            return;
        } catch (const WireError& e) {
            if (e.kind() != WireErrc::truncated) {
                c.expect(false, "truncation raised the wrong error kind");
                return;
            }
        }
    }

    // out-of-order frames raise the protocol error
    auto [a, b] = make_loopback_pair();
    FrameChannel ca(*a), cb(*b);
    Frame f;
    f.type = MsgType::activation;
    f.iteration = 7;
    ca.send(f);
    try {
        cb.expect(MsgType::activation, 6);
        c.expect(false, "out-of-order iteration accepted");
    } catch (const WireError& e) {
        c.expect(e.kind() == WireErrc::protocol, "out-of-order raised the wrong error kind");
    }
    f.type = MsgType::gradient;
    f.iteration = 6;
    ca.send(f);
    try {
        cb.expect(MsgType::activation, 6);
        c.expect(false, "foreign frame type accepted");
    } catch (const WireError& e) {
        c.expect(e.kind() == WireErrc::protocol, "foreign type raised the wrong error kind");
    }
}

}  // namespace

int main() {
    std::printf("split fine-tuning acceptance suite\n");
    run_criterion(1, "performance-model reproduction (744.0 / 2923.6 / 647.6 ms to 0.1 ms)", 1.0,
                  criterion_perfmodel);
    run_criterion(2, "volume law (302,383,104 bytes; 16,384-byte activation; 4.0x reduction)",
                  30.0, criterion_volume_law);
    run_criterion(3, "split-equals-local (50 iters, loopback and localhost socket, bit-exact)",
                  60.0, criterion_equivalence);
    run_criterion(4, "full-rank fidelity (outputs within 1e-4 relative on 10 batches)", 30.0,
                  criterion_full_rank_fidelity);
    run_criterion(5, "svd invariants (orthogonality 1e-6, descending, Eckart-Young 1e-5, "
                     "determinism; 100 matrices)", 60.0, criterion_svd_suite);
    run_criterion(6, "gradient correctness (finite differences, every layer kind, 10 seeds)",
                  120.0, criterion_gradients);
    run_criterion(7, "convergence: SFT(l=L-1, R=8) within 2 points of baseline, 5-seed mean; "
                     "split-layer sweep emitted", 300.0, criterion_convergence);
    run_criterion(8, "throttle fidelity (1 MB at 8 Mbps in [1.0, 1.15] s; 16 KB at 100 Mbps "
                     "within 30%)", 30.0, criterion_throttle);
    run_criterion(9, "wire robustness (1,000 frame round-trips; corruption, truncation, "
                     "out-of-order)", 30.0, criterion_wire_robustness);

    if (g_failures == 0) {
        std::printf("all acceptance criteria passed\n");
        return 0;
    }
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
}
