#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "affect/data.hpp"
#include "affect/metrics.hpp"
#include "affect/model.hpp"
#include "affect/teacher.hpp"
#include "affect/trainer.hpp"

namespace {

namespace fs = std::filesystem;
using namespace affect;

std::ofstream open_output(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    return out;
}

int run_gen_data(const std::string& config_path, const std::string& out_path) {
    const data::DataGenConfig config = train::load_datagen_config(config_path);
    std::vector<data::Sample> samples = data::generate_dataset(config);
    data::apply_missingness(samples, config.missing, config.seed + 1);
    data::write_jsonl(samples, out_path);
    std::cout << "wrote " << samples.size() << " samples to " << out_path << "\n";
    return 0;
}

int run_train(const std::string& config_path, const std::string& mode_name,
              const std::string& out_dir, bool eval_teacher) {
    train::TrainConfig config = train::load_train_config(config_path);
    if (!mode_name.empty()) config.mode = train::mode_from_string(mode_name);
    if (eval_teacher) config.eval_teacher = true;
    config.validate();

    fs::create_directories(out_dir);
    const train::DatasetSplits splits = train::prepare_dataset(config);
    std::cout << "training mode=" << train::to_string(config.mode) << " on "
              << splits.train_set.size() << " train / " << splits.val_set.size()
              << " val samples\n";

    std::ofstream metrics_csv = open_output(fs::path(out_dir) / "metrics.csv");
    const train::TrainResult result =
        train::run_training(config, splits.train_set, splits.val_set, &metrics_csv);

    model::save_checkpoint(result.student, (fs::path(out_dir) / "student.ckpt.json").string());
    if (result.teacher) {
        teacher::save_teacher(*result.teacher,
                              (fs::path(out_dir) / "teacher.ckpt.json").string());
    }

    std::cout << result.final_val.pretty();
    std::cout << "metrics csv: " << (fs::path(out_dir) / "metrics.csv").string() << "\n";
    return 0;
}

int run_eval(const std::string& checkpoint_path, const std::string& data_path,
             bool au_exact_match) {
    const model::ModelParams params = model::load_checkpoint(checkpoint_path);
    const std::vector<data::Sample> samples = data::read_jsonl(data_path);
    if (samples.empty()) throw std::invalid_argument("eval: dataset is empty");

    train::EvalOptions options;
    options.au_exact_match_acc = au_exact_match;
    const metrics::MetricsReport report = train::evaluate(params, samples, options);
    std::cout << metrics::MetricsReport::csv_header() << "\n" << report.csv_row() << "\n";
    return 0;
}

int run_ablate(const std::string& config_path, const std::string& seeds_arg,
               const std::string& out_dir) {
    const train::TrainConfig config = train::load_train_config(config_path);

    std::vector<std::uint64_t> seeds;
    std::string token;
    std::istringstream stream(seeds_arg);
    while (std::getline(stream, token, ',')) {
        if (token.empty()) continue;
        try {
            seeds.push_back(std::stoull(token));
        } catch (const std::exception&) {
            throw std::invalid_argument("ablate: bad seed '" + token + "'");
        }
    }
    if (seeds.empty()) throw std::invalid_argument("ablate: no seeds given");

    fs::create_directories(out_dir);
    std::ofstream csv = open_output(fs::path(out_dir) / "ablation.csv");
    const auto rows = train::run_ablation(config, seeds, &csv);

    auto cell = [](const std::optional<double>& v) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%8.4f", v ? *v : std::nan(""));
        return std::string(buf);
    };
    std::cout << "seed  mode      m_expr    m_va      m_au\n";
    for (const auto& row : rows) {
        std::printf("%-5llu %-9s %s  %s  %s\n", static_cast<unsigned long long>(row.seed),
                    train::to_string(row.mode), cell(row.report.m_expr).c_str(),
                    cell(row.report.m_va).c_str(), cell(row.report.m_au).c_str());
    }
    std::cout << "ablation csv: " << (fs::path(out_dir) / "ablation.csv").string() << "\n";
    return 0;
}

int run_grad_check(std::uint64_t seed, std::size_t batch, double tolerance) {
    const ad::GradCheckReport report =
        train::grad_check_full_model(seed, batch, tolerance);
    std::cout << report.summary();
    return report.pass ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"semi-supervised multi-task affect training engine"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset as JSONL");
    std::string gen_config, gen_out;
    gen->add_option("--config", gen_config, "data config (JSON)")->required();
    gen->add_option("--out", gen_out, "output dataset path")->required();

    auto* tr = app.add_subcommand("train", "train one mode and write metrics + checkpoints");
    std::string train_config, train_mode, train_out;
    bool train_eval_teacher = false;
    tr->add_option("--config", train_config, "train config (JSON)")->required();
    tr->add_option("--mode", train_mode, "baseline | mt | mt-sc");
    tr->add_option("--out", train_out, "output directory")->required();
    tr->add_flag("--eval-teacher", train_eval_teacher, "evaluate the EMA teacher instead of the student");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    std::string eval_checkpoint, eval_data;
    bool eval_au_exact = false;
    ev->add_option("--checkpoint", eval_checkpoint, "checkpoint path")->required();
    ev->add_option("--data", eval_data, "dataset JSONL path")->required();
    ev->add_flag("--au-exact-match", eval_au_exact, "AU accuracy as exact-match per sample");

    auto* ab = app.add_subcommand("ablate", "train all three modes per seed");
    std::string ablate_config, ablate_seeds = "1,2,3", ablate_out;
    ab->add_option("--config", ablate_config, "train config (JSON)")->required();
    ab->add_option("--seeds", ablate_seeds, "comma-separated seed list");
    ab->add_option("--out", ablate_out, "output directory")->required();

    auto* gc = app.add_subcommand("grad-check", "verify analytic gradients of the full model");
    std::uint64_t gc_seed = 1;
    std::size_t gc_batch = 8;
    double gc_tolerance = 1e-4;
    gc->add_option("--seed", gc_seed, "rng seed");
    gc->add_option("--batch", gc_batch, "batch size");
    gc->add_option("--tolerance", gc_tolerance, "max relative error");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) return run_gen_data(gen_config, gen_out);
        if (tr->parsed()) return run_train(train_config, train_mode, train_out, train_eval_teacher);
        if (ev->parsed()) return run_eval(eval_checkpoint, eval_data, eval_au_exact);
        if (ab->parsed()) return run_ablate(ablate_config, ablate_seeds, ablate_out);
        if (gc->parsed()) return run_grad_check(gc_seed, gc_batch, gc_tolerance);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
