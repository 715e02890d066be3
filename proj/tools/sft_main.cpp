// sft: split fine-tuning toolkit.
//
// Subcommands: train, decompose, estimate, gendata. Options come from a flat
// key=value config file (--config) and per-key command-line overrides
// (--<key> <value>). SFT_LOG={error,info,debug} controls stderr verbosity.
//
// Exit codes: 0 ok, 2 config error, 3 connection failure, 4 training/protocol
// error.

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "run_config.hpp"
#include "sft/checkpoint.hpp"
#include "sft/log.hpp"
#include "sft/perfmodel.hpp"
#include "sft/splitnet.hpp"
#include "sft/transport.hpp"

namespace sft::cli {
namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitConnect = 3;
constexpr int kExitTraining = 4;

constexpr uint64_t kBatchSeedSalt = 0x5eed0000b47c4ULL;

const char* kUsage = R"(usage: sft <subcommand> [--config FILE] [--KEY VALUE]...

subcommands:
  train      run fine-tuning (role = local | loopback | edge | cloud)
  decompose  rewrite a checkpoint's split FFN into ffn1/ffn2/ffn3 via SVD
  estimate   analytic per-iteration time model (naive / sl / sft)
  gendata    write a synthetic majority-count dataset as CSV

Every key in the config file can be overridden as --KEY VALUE. Run
`sft <subcommand> --help` for the keys of one subcommand.
)";

const char* kTrainHelp = R"(sft train: run fine-tuning.

model keys   : vocab=64 seq=16 d_model=32 ffn_dim=128 blocks=4 heads=2 classes=2
plan keys    : split_layer=0 rank=0 residual=eliminated|kept_local|kept_with_transfer
               (rank > 0 turns decomposition on; required for split roles)
optimizer    : opt=adam|sgd lr=3e-4 beta1=0.9 beta2=0.999 eps=1e-8 momentum=0
run keys     : role=local|loopback|edge|cloud iters=300 batch=32 seed=1
data keys    : dataset=synthetic|<csv path> dataset_size=2048 dataset_seed=1
wire keys    : peer=<host> listen=0.0.0.0 port=7631 bandwidth_mbps=0
               connect_timeout_ms=5000
output keys  : metrics_out=metrics.csv checkpoint_in= checkpoint_out=

role=edge connects to peer:port; role=cloud listens on listen:port; both need
identical model/plan/seed (or checkpoint_in) configs, verified at handshake.
)";

const char* kDecomposeHelp = R"(sft decompose: SVD-rewrite one FFN inside a checkpoint.

keys: checkpoint_in=<file> checkpoint_out=<file> split_layer=<l> rank=<R>
      residual=eliminated|kept_local|kept_with_transfer plus the model keys
      (vocab seq d_model ffn_dim blocks heads classes).

Prints the per-rank reconstruction error table of the split layer's weight,
then writes the decomposed checkpoint.
)";

const char* kEstimateHelp = R"(sft estimate: analytic iteration-time model.

keys: t_edge_layer_ms=60.3 t_cloud_layer_ms=10.3 n_edge_layers=10 n_cloud_layers=2
      naive_t_edge_layer_ms=<default t_edge_layer_ms> naive_n_layers=<default n_edge+n_cloud>
      batch=32 m_dim=3076 n_dim=768 rank=8 bandwidth_mbps=1000
      t_comm_sl_ms / t_comm_sft_ms (optional direct overrides of the comm term)
      sweep_ranks=<R max> sweep_out=rank_sweep.csv (optional rank sweep CSV)

Prints one row per mode: mode, compute_ms, comm_ms, total_ms.
)";

const char* kGendataHelp = R"(sft gendata: synthetic majority-count dataset.

keys: size=2048 seed=1 out=<csv path> vocab=64 seq=16 classes=2
)";

struct Args {
    std::string subcommand;
    KvConfig kv;
    bool help = false;
};

Args parse_args(int argc, char** argv) {
    Args args;
    if (argc < 2) return args;
    args.subcommand = argv[1];
    for (int i = 2; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--help" || a == "-h") {
            args.help = true;
            continue;
        }
        if (a.rfind("--", 0) != 0)
            throw std::runtime_error("expected --key value, got '" + a + "'");
        if (i + 1 >= argc) throw std::runtime_error("missing value for " + a);
        const std::string key = a.substr(2);
        const std::string value = argv[++i];
        if (key == "config") {
            KvConfig file = KvConfig::from_file(value);
            for (const auto& [k, v] : file.values())
                if (!args.kv.has(k)) args.kv.set(k, v);
        } else {
            args.kv.set(key, value);
        }
    }
    return args;
}

void save_if_requested(const LayerStack& stack, const std::string& path) {
    if (path.empty()) return;
    save_checkpoint(stack, path);
    log_info("wrote checkpoint %s", path.c_str());
}

int cmd_train(const KvConfig& kv) {
    RunConfig rc;
    Dataset ds;
    try {
        rc = RunConfig::from_kv(kv);
        if (rc.role != "cloud") ds = rc.load_dataset();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "sft train: %s\n", e.what());
        return kExitConfig;
    }

    const uint64_t batch_seed = rc.seed ^ kBatchSeedSalt;
    try {
        if (rc.role == "local") {
            LayerStack stack = rc.assemble_model();
            OptimState opt(rc.opt);
            const auto metrics = run_local(stack, ds, rc.iters, opt, rc.batch, batch_seed);
            write_metrics_csv(metrics, rc.metrics_out);
            save_if_requested(stack, rc.checkpoint_out);
            if (!metrics.empty())
                log_info("local: %d iters, final loss %.6f acc %.4f", rc.iters,
                         metrics.back().loss, metrics.back().batch_accuracy);
            return kExitOk;
        }

        if (rc.role == "loopback") {
            LayerStack stack = rc.assemble_model();
            SplitRunResult res = run_split_loopback(stack, rc.plan, ds, rc.iters, rc.opt,
                                                    rc.batch, batch_seed, rc.bandwidth_bps());
            write_metrics_csv(res.edge, rc.metrics_out);
            if (!rc.checkpoint_out.empty()) {
                // recombine the trained halves into a full-model checkpoint
                LayerStack merged = res.trained.net1;
                for (const auto& layer : res.trained.net2.layers) merged.layers.push_back(layer);
                merged.cfg = rc.model;
                save_if_requested(merged, rc.checkpoint_out);
            }
            if (!res.edge.empty())
                log_info("loopback: %d iters, final loss %.6f acc %.4f", rc.iters,
                         res.edge.back().loss, res.edge.back().batch_accuracy);
            return kExitOk;
        }

        // wire roles
        SessionConfig session;
        session.config_hash = rc.session_hash();
        session.plan = rc.plan;
        session.batch = static_cast<uint32_t>(rc.batch);
        session.seq = static_cast<uint32_t>(rc.model.seq_len);

        LayerStack stack = rc.assemble_model();
        PartitionedModel parts = partition(stack, rc.plan);

        std::unique_ptr<Transport> transport;
        try {
            if (rc.role == "edge") {
                log_info("edge: connecting to %s:%d", rc.peer.c_str(), rc.port);
                transport = TcpTransport::connect(rc.peer, rc.port, rc.connect_timeout_ms);
            } else {
                log_info("cloud: listening on %s:%d", rc.listen.c_str(), rc.port);
                transport = TcpTransport::listen_accept_one(rc.listen, rc.port);
            }
        } catch (const TransportClosed& e) {
            std::fprintf(stderr, "sft train: %s\n", e.what());
            return kExitConnect;
        }

        FrameChannel chan(*transport, rc.bandwidth_bps());
        if (rc.role == "edge") {
            handshake_edge(chan, session);
            OptimState opt(rc.opt);
            const auto metrics =
                run_edge_loop(parts.net1, opt, ds, rc.iters, rc.batch, batch_seed, chan, rc.plan);
            write_metrics_csv(metrics, rc.metrics_out);
            save_if_requested(parts.net1, rc.checkpoint_out);
        } else {
            handshake_cloud(chan, session);
            OptimState opt(rc.opt);
            const auto metrics = run_cloud_loop(parts.net2, opt, chan, rc.plan);
            write_metrics_csv(metrics, rc.metrics_out);
            save_if_requested(parts.net2, rc.checkpoint_out);
        }
        return kExitOk;
    } catch (const TransportClosed& e) {
        std::fprintf(stderr, "sft train: connection lost: %s\n", e.what());
        return kExitConnect;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "sft train: %s\n", e.what());
        return kExitTraining;
    }
}

int cmd_decompose(const KvConfig& kv) {
    try {
        RunConfig rc = RunConfig::from_kv(kv);
        if (!rc.has_plan)
            throw std::runtime_error("decompose requires split_layer and rank keys");
        if (rc.checkpoint_in.empty() || rc.checkpoint_out.empty())
            throw std::runtime_error("decompose requires checkpoint_in and checkpoint_out");

        Rng rng(rc.seed);
        LayerStack stack = build_model(rc.model, rng);
        load_checkpoint(stack, rc.checkpoint_in);

        const std::string down = "blk" + std::to_string(rc.plan.split_layer) + ".down";
        const Matrix& w = stack.layers[static_cast<size_t>(stack.require_layer(down))]
                              .param("w")
                              .value;
        std::set<int> ranks;
        for (int r = 1; r <= std::min(rc.model.d_model, rc.model.ffn_dim); r *= 2)
            ranks.insert(r);
        ranks.insert(std::min(rc.model.d_model, rc.model.ffn_dim));
        ranks.insert(rc.plan.rank);

        std::printf("rank  rel_frobenius_error\n");
        for (int r : ranks) std::printf("%-5d %.6e\n", r, reconstruction_error(w, r));

        const LayerStack dec = decompose_ffn(stack, rc.plan);
        save_checkpoint(dec, rc.checkpoint_out);
        log_info("wrote decomposed checkpoint %s", rc.checkpoint_out.c_str());
        return kExitOk;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "sft decompose: %s\n", e.what());
        return kExitConfig;
    }
}

int cmd_estimate(const KvConfig& kv) {
    try {
        PerfParams base;
        base.t_edge_layer_ms = kv.get_double("t_edge_layer_ms", 60.3);
        base.t_cloud_layer_ms = kv.get_double("t_cloud_layer_ms", 10.3);
        base.n_edge_layers = static_cast<int>(kv.get_int("n_edge_layers", 10));
        base.n_cloud_layers = static_cast<int>(kv.get_int("n_cloud_layers", 2));
        const double bandwidth_mbps = kv.get_double("bandwidth_mbps", 1000.0);
        base.bandwidth_bps = bandwidth_mbps * 1e6;

        const uint64_t batch = static_cast<uint64_t>(kv.get_int("batch", 32));
        const uint64_t m_dim = static_cast<uint64_t>(kv.get_int("m_dim", 3076));
        const uint64_t n_dim = static_cast<uint64_t>(kv.get_int("n_dim", 768));
        const uint64_t rank = static_cast<uint64_t>(kv.get_int("rank", 8));

        PerfParams naive = base;
        naive.t_edge_layer_ms = kv.get_double("naive_t_edge_layer_ms", base.t_edge_layer_ms);
        naive.n_edge_layers = static_cast<int>(
            kv.get_int("naive_n_layers", base.n_edge_layers + base.n_cloud_layers));
        naive.n_cloud_layers = 0;

        PerfParams sl = base;
        sl.volume_bytes = comm_volume(batch, m_dim, n_dim);
        if (kv.has("t_comm_sl_ms")) sl.t_comm_override_ms = kv.get_double("t_comm_sl_ms");

        PerfParams sft = base;
        sft.volume_bytes = comm_volume(batch, m_dim, rank);
        if (kv.has("t_comm_sft_ms")) sft.t_comm_override_ms = kv.get_double("t_comm_sft_ms");

        const double t_naive = estimate_iter_ms(PerfMode::naive, naive);
        const double t_sl = estimate_iter_ms(PerfMode::sl, sl);
        const double t_sft = estimate_iter_ms(PerfMode::sft, sft);
        const double compute =
            base.t_edge_layer_ms * base.n_edge_layers + base.t_cloud_layer_ms * base.n_cloud_layers;

        std::printf("mode   compute_ms  comm_ms    total_ms\n");
        std::printf("naive  %-11.1f %-10.1f %.1f\n", t_naive, 0.0, t_naive);
        std::printf("sl     %-11.1f %-10.1f %.1f\n", compute, t_sl - compute, t_sl);
        std::printf("sft    %-11.1f %-10.1f %.1f\n", compute, t_sft - compute, t_sft);

        if (kv.has("sweep_ranks")) {
            const int max_rank = static_cast<int>(kv.get_int("sweep_ranks"));
            if (max_rank < 1) throw std::invalid_argument("sweep_ranks must be >= 1");
            const std::string out = kv.get_str("sweep_out", "rank_sweep.csv");
            std::FILE* f = std::fopen(out.c_str(), "w");
            if (!f) throw std::runtime_error("cannot open " + out);
            std::fprintf(f, "rank,volume_bytes,comm_ms,total_ms\n");
            for (int r = 1; r <= max_rank; ++r) {
                PerfParams p = base;
                p.volume_bytes = comm_volume(batch, m_dim, static_cast<uint64_t>(r));
                const double t = estimate_iter_ms(PerfMode::sft, p);
                std::fprintf(f, "%d,%llu,%.3f,%.3f\n", r,
                             static_cast<unsigned long long>(p.volume_bytes), t - compute, t);
            }
            std::fclose(f);
            log_info("wrote rank sweep %s", out.c_str());
        }
        return kExitOk;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "sft estimate: %s\n", e.what());
        return kExitConfig;
    }
}

int cmd_gendata(const KvConfig& kv) {
    try {
        ModelConfig model = model_from_kv(kv);
        const int size = static_cast<int>(kv.get_int("size", 2048));
        const uint64_t seed = static_cast<uint64_t>(kv.get_int("seed", 1));
        const std::string out = kv.get_str("out");
        const Dataset ds = gen_majority_task(size, model, seed);
        write_csv_dataset(ds, out);
        std::printf("wrote %d rows to %s\n", size, out.c_str());
        return kExitOk;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "sft gendata: %s\n", e.what());
        return kExitConfig;
    }
}

int run(int argc, char** argv) {
    Args args;
    try {
        args = parse_args(argc, argv);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "sft: %s\n", e.what());
        return kExitConfig;
    }

    if (args.subcommand.empty() || args.subcommand == "--help" || args.subcommand == "-h" ||
        args.subcommand == "help") {
        std::fputs(kUsage, stdout);
        return kExitOk;
    }
    if (args.help) {
        if (args.subcommand == "train") std::fputs(kTrainHelp, stdout);
        else if (args.subcommand == "decompose") std::fputs(kDecomposeHelp, stdout);
        else if (args.subcommand == "estimate") std::fputs(kEstimateHelp, stdout);
        else if (args.subcommand == "gendata") std::fputs(kGendataHelp, stdout);
        else std::fputs(kUsage, stdout);
        return kExitOk;
    }

    if (args.subcommand == "train") return cmd_train(args.kv);
    if (args.subcommand == "decompose") return cmd_decompose(args.kv);
    if (args.subcommand == "estimate") return cmd_estimate(args.kv);
    if (args.subcommand == "gendata") return cmd_gendata(args.kv);

    std::fprintf(stderr, "sft: unknown subcommand '%s'\n%s", args.subcommand.c_str(), kUsage);
    return kExitConfig;
}

}  // namespace
}  // namespace sft::cli

int main(int argc, char** argv) { return sft::cli::run(argc, argv); }
