#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "matav/dataset.hpp"
#include "matav/gradcheck.hpp"
#include "matav/model.hpp"
#include "matav/runconfig.hpp"
#include "matav/ssm.hpp"
#include "matav/threading.hpp"

namespace fs = std::filesystem;
using namespace matav;

namespace {

std::vector<uint64_t> parse_u64_list(const std::string& csv) {
    std::vector<uint64_t> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoull(item));
    return out;
}

DialogueSet load_or_generate(const RunConfig& cfg) {
    if (!cfg.train_path.empty()) return read_feature_file(cfg.train_path);
    return generate_synthetic(cfg.synth);
}

int cmd_gen(const SynthConfig& scfg, const std::string& out) {
    DialogueSet set = generate_synthetic(scfg);
    write_feature_file(set, out);
    std::cout << "wrote " << set.dialogues.size() << " dialogues ("
              << set.total_utterances() << " utterances) to " << out << "\n";
    return 0;
}

int cmd_train(RunConfig cfg, const std::string& out_dir) {
    cfg.validate();
    fs::create_directories(out_dir);
    {
        std::ofstream os(out_dir + "/effective_config.json");
        os << cfg.to_json() << "\n";
    }
    DialogueSet train_set = load_or_generate(cfg);
    DialogueSet dev_set;
    const bool has_dev = !cfg.dev_path.empty();
    if (has_dev) dev_set = read_feature_file(cfg.dev_path);

    MatavModel model(train_set.t_dim, train_set.a_dim, train_set.v_dim,
                     train_set.label_set.size(), cfg.model, cfg.mec, cfg.train.seed);
    TrainReport report = train(model, train_set, has_dev ? &dev_set : nullptr, cfg.train);
    {
        std::ofstream os(out_dir + "/train_report.json");
        os << report.to_json() << "\n";
    }
    save_checkpoint(model, out_dir + "/checkpoint.mtck");
    std::cout << "final train accuracy " << report.train_accuracy.back() << ", wf1 "
              << report.train_wf1.back() << " (" << report.wallclock_s << " s)\n";
    std::cout << "checkpoint: " << out_dir << "/checkpoint.mtck\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data) {
    MatavModel model = load_checkpoint(checkpoint);
    DialogueSet set = read_feature_file(data);
    MetricsReport report = evaluate(model, set, Ablation::none);
    std::cout << report.to_json(set.label_set.names) << "\n";
    return 0;
}

int cmd_ablate(RunConfig cfg, const std::string& seeds_csv) {
    cfg.validate();
    const std::vector<uint64_t> seeds = parse_u64_list(seeds_csv);
    DialogueSet train_set = load_or_generate(cfg);
    DialogueSet eval_set =
        cfg.test_path.empty() ? train_set : read_feature_file(cfg.test_path);
    auto rows = run_ablation_suite(train_set, eval_set, cfg.model, cfg.mec, cfg.train, seeds);
    const std::string csv = ablation_csv(rows);
    fs::create_directories(cfg.out_dir);
    {
        std::ofstream os(cfg.out_dir + "/ablation.csv");
        os << csv;
    }
    std::cout << csv;
    return 0;
}

int cmd_bench_scan(const std::string& lengths_csv, const std::string& threads_csv,
                   const std::string& out) {
    const std::vector<uint64_t> lengths = parse_u64_list(lengths_csv);
    const std::vector<uint64_t> threads = parse_u64_list(threads_csv);
    const std::size_t d_model = 64, d_state = 16;
    std::ostringstream csv;
    csv << "n,d_model,d_state,n_chunks,threads,chunked_elems_per_s,sequential_elems_per_s,"
           "speedup,max_abs_diff\n";
    csv.precision(9);
    Rng rng(42);
    for (uint64_t n : lengths) {
        ScanInputs in;
        in.x = Matrix(n, d_model);
        in.delta = Matrix(n, d_model);
        in.b = Matrix(n, d_state);
        in.c = Matrix(n, d_state);
        in.a = Matrix(d_model, d_state);
        for (std::size_t i = 0; i < in.x.size(); ++i) in.x.data()[i] = rng.gaussian();
        for (std::size_t i = 0; i < in.delta.size(); ++i)
            in.delta.data()[i] = 0.001 + 0.1 * rng.uniform();
        for (std::size_t i = 0; i < in.b.size(); ++i) in.b.data()[i] = rng.gaussian();
        for (std::size_t i = 0; i < in.c.size(); ++i) in.c.data()[i] = rng.gaussian();
        for (std::size_t i = 0; i < in.a.size(); ++i) in.a.data()[i] = -0.5 - 2.0 * rng.uniform();

        const auto t0 = std::chrono::steady_clock::now();
        const Matrix y_seq = scan_sequential(in);
        const double seq_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const double elems = static_cast<double>(n) * static_cast<double>(d_model);

        for (uint64_t t : threads) {
            set_max_threads(static_cast<int>(t));
            const std::size_t n_chunks = (t == 1) ? 1 : t * 8;
            const auto t1 = std::chrono::steady_clock::now();
            const Matrix y_chunked = scan_chunked(in, n_chunks);
            const double chunk_s =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
            csv << n << "," << d_model << "," << d_state << "," << n_chunks << "," << t << ","
                << elems / chunk_s << "," << elems / seq_s << "," << seq_s / chunk_s << ","
                << max_abs_diff(y_seq, y_chunked) << "\n";
        }
    }
    if (out.empty()) {
        std::cout << csv.str();
    } else {
        std::ofstream os(out);
        os << csv.str();
        std::cout << "wrote " << out << "\n";
    }
    return 0;
}

int cmd_gradcheck(const std::string& module) {
    const auto worst = run_gradcheck(GradCheckOptions{}, module);
    bool ok = true;
    for (const auto& [name, err] : worst) {
        const bool pass = err < kGradCheckTolerance;
        ok = ok && pass;
        std::cout << name << ": worst relative error " << err << (pass ? "" : "  [FAIL]")
                  << "\n";
    }
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MaTAV emotion-recognition pipeline"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic feature file");
    SynthConfig scfg;
    std::string gen_out;
    gen->add_option("--seed", scfg.seed);
    gen->add_option("--dialogues", scfg.n_dialogues);
    gen->add_option("--classes", scfg.n_classes);
    gen->add_option("--rho", scfg.cross_modal_correlation);
    gen->add_option("--sigma", scfg.noise_sigma);
    gen->add_option("--shift-prob", scfg.emotion_shift_prob);
    gen->add_option("--min-utts", scfg.min_utterances);
    gen->add_option("--max-utts", scfg.max_utterances);
    gen->add_option("--t-dim", scfg.t_dim);
    gen->add_option("--a-dim", scfg.a_dim);
    gen->add_option("--v-dim", scfg.v_dim);
    gen->add_option("--split", scfg.split);
    gen->add_option("--out", gen_out)->required();

    // train
    auto* tr = app.add_subcommand("train", "train a model and write a checkpoint");
    std::string tr_config, tr_data, tr_out;
    uint64_t tr_seed = 0;
    std::size_t tr_epochs = 0, tr_batch = 0;
    double tr_lr = -1.0, tr_lambda = -1.0;
    std::string tr_ablation;
    tr->add_option("--config", tr_config);
    tr->add_option("--data", tr_data);
    tr->add_option("--out", tr_out);
    tr->add_option("--seed", tr_seed);
    tr->add_option("--epochs", tr_epochs);
    tr->add_option("--batch-size", tr_batch);
    tr->add_option("--lr", tr_lr);
    tr->add_option("--lambda", tr_lambda);
    tr->add_option("--ablation", tr_ablation);

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a feature file");
    std::string ev_checkpoint, ev_data;
    ev->add_option("--checkpoint", ev_checkpoint)->required();
    ev->add_option("--data", ev_data)->required();

    // ablate
    auto* ab = app.add_subcommand("ablate", "run the full/no_mamba/no_mec comparison");
    std::string ab_config, ab_seeds = "1";
    ab->add_option("--config", ab_config)->required();
    ab->add_option("--seeds", ab_seeds);

    // bench-scan
    auto* bench = app.add_subcommand("bench-scan", "scan throughput sweep");
    std::string bn_lengths = "1024,4096,16384,65536,262144,1048576";
    std::string bn_threads = "1,8";
    std::string bn_out;
    bench->add_option("--lengths", bn_lengths);
    bench->add_option("--threads", bn_threads);
    bench->add_option("--out", bn_out);

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    std::string gc_module;
    gc->add_option("--module", gc_module);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen(scfg, gen_out);
        if (tr->parsed()) {
            RunConfig cfg;
            if (!tr_config.empty()) cfg = RunConfig::from_json_file(tr_config);
            if (!tr_data.empty()) cfg.train_path = tr_data;
            if (tr_seed != 0) cfg.train.seed = tr_seed;
            if (tr_epochs != 0) cfg.train.epochs = tr_epochs;
            if (tr_batch != 0) cfg.train.batch_size = tr_batch;
            if (tr_lr >= 0.0) cfg.train.lr = tr_lr;
            if (tr_lambda >= 0.0) cfg.mec.lambda = tr_lambda;
            if (!tr_ablation.empty()) cfg.train.ablation = ablation_from_string(tr_ablation);
            if (!tr_out.empty()) cfg.out_dir = tr_out;
            return cmd_train(cfg, cfg.out_dir);
        }
        if (ev->parsed()) return cmd_eval(ev_checkpoint, ev_data);
        if (ab->parsed()) {
            RunConfig cfg = RunConfig::from_json_file(ab_config);
            return cmd_ablate(cfg, ab_seeds);
        }
        if (bench->parsed()) return cmd_bench_scan(bn_lengths, bn_threads, bn_out);
        if (gc->parsed()) return cmd_gradcheck(gc_module);
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
