#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ppg/adasyn.hpp"
#include "ppg/checkpoint.hpp"
#include "ppg/dataset.hpp"
#include "ppg/errors.hpp"
#include "ppg/rng.hpp"
#include "ppg/signal.hpp"
#include "ppg/synth.hpp"
#include "ppg/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct GlobalArgs {
    std::string config_path;
    std::uint64_t seed = 1;
    std::string out_dir = ".";
    std::size_t threads = 1;
    json file;  // parsed --config contents
};

// flags > config file > defaults
template <typename T>
void merge_opt(const CLI::Option* opt, const json& section, const std::string& key, T& value) {
    if (opt != nullptr && opt->count() > 0) return;
    if (section.contains(key)) value = section.at(key).get<T>();
}

json config_section(const GlobalArgs& g, const std::string& name) {
    if (g.file.contains(name)) return g.file.at(name);
    return json::object();
}

std::vector<std::string> split_csv_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(item);
    return out;
}

void write_json_file(const std::string& path, const ordered_json& j) {
    std::ofstream f(path);
    if (!f) throw ppg::DataError("cannot open for writing: " + path);
    f << j.dump(2) << "\n";
}

std::string frame_name(std::size_t i, const char* suffix) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "frame_%03zu%s", i, suffix);
    return buf;
}

// ---- synth ---------------------------------------------------------------

int cmd_synth(GlobalArgs& g, ppg::GeneratorConfig cfg, std::size_t frames,
              const ordered_json& effective) {
    fs::create_directories(g.out_dir);
    std::size_t artifact_pulses = 0, total_pulses = 0;
    for (std::size_t i = 0; i < frames; ++i) {
        ppg::GeneratorConfig frame_cfg = cfg;
        frame_cfg.seed = ppg::derive_seed(cfg.seed, "frame-" + std::to_string(i));
        ppg::AnnotatedFrame af = ppg::generate_frame(frame_cfg);
        ppg::write_signal_csv(g.out_dir + "/" + frame_name(i, ".csv"), af.frame);
        ppg::write_intervals_json(g.out_dir + "/" + frame_name(i, ".intervals.json"),
                                  af.intervals);
        // realized pulse-level prevalence through the actual pipeline
        auto pulses = ppg::label_pulses(af, ppg::preprocess(af.frame, ppg::BandpassSpec{}));
        for (const auto& p : pulses) artifact_pulses += p.label == 1 ? 1 : 0;
        total_pulses += pulses.size();
    }
    write_json_file(g.out_dir + "/synth_config.json", effective);
    const double prevalence =
        total_pulses > 0 ? static_cast<double>(artifact_pulses) / static_cast<double>(total_pulses)
                         : 0.0;
    std::printf("frames=%zu pulses=%zu artifact_prevalence=%.4f\n", frames, total_pulses,
                prevalence);
    return 0;
}

// ---- preprocess ----------------------------------------------------------

std::vector<ppg::CanonicalPulse> preprocess_one(const std::string& csv_path,
                                                const std::string& intervals_path,
                                                ppg::RejectionReport& report) {
    ppg::SignalFrame frame = ppg::read_signal_csv(csv_path);
    frame.id = fs::path(csv_path).stem().string();
    auto pulses = ppg::preprocess(frame, ppg::BandpassSpec{}, &report);
    if (!intervals_path.empty()) {
        ppg::AnnotatedFrame af;
        af.frame = frame;
        af.intervals = ppg::read_intervals_json(intervals_path);
        pulses = ppg::label_pulses(af, std::move(pulses));
    }
    return pulses;
}

int cmd_preprocess(const std::string& in_path, const std::string& intervals_path,
                   const std::string& out_path, const ordered_json& effective) {
    ppg::RejectionReport report;
    std::vector<ppg::CanonicalPulse> pulses;
    if (fs::is_directory(in_path)) {
        // a synth output directory: every signal CSV with its sibling intervals
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(in_path)) {
            const fs::path& p = entry.path();
            if (p.extension() == ".csv") files.push_back(p);
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) throw ppg::DataError("no signal CSVs in directory: " + in_path);
        for (const fs::path& p : files) {
            fs::path iv = p;
            iv.replace_extension(".intervals.json");
            auto part = preprocess_one(p.string(), fs::exists(iv) ? iv.string() : "", report);
            pulses.insert(pulses.end(), part.begin(), part.end());
        }
    } else {
        pulses = preprocess_one(in_path, intervals_path, report);
    }
    ppg::write_pulse_csv(out_path, ppg::PulseDataset::from_pulses(pulses));
    ordered_json rj;
    rj["config"] = effective;
    rj["pulses"] = pulses.size();
    rj["rejected"] = {{"too_short", report.too_short},
                      {"too_long", report.too_long},
                      {"degenerate", report.degenerate}};
    write_json_file(out_path + ".rejections.json", rj);
    std::printf("pulses=%zu rejected_short=%zu rejected_long=%zu degenerate=%zu\n", pulses.size(),
                report.too_short, report.too_long, report.degenerate);
    return 0;
}

// ---- train ---------------------------------------------------------------

struct TrainArgs {
    std::string pulses_path;
    std::string model = "grn-transformer";
    double portion = 1.0;
    ppg::TrainSpec tspec;
    ppg::SplitSpec sspec;
    ppg::AdasynConfig adasyn;
    bool lr_given = false;
};

int cmd_train(GlobalArgs& g, TrainArgs& a, const ordered_json& effective) {
    fs::create_directories(g.out_dir);
    const ppg::ModelKind kind = ppg::model_kind_from_name(a.model);
    ppg::ModelSpec mspec = ppg::ModelSpec::for_kind(kind);
    if (!a.lr_given) a.tspec.lr = mspec.default_lr();

    ppg::PulseDataset corpus = ppg::read_pulse_csv(a.pulses_path);
    const std::uint64_t run_seed = ppg::derive_seed(g.seed, "train");
    corpus = ppg::stratified_portion(corpus, a.portion, run_seed);
    a.sspec.seed = run_seed;
    a.tspec.seed = run_seed;
    a.adasyn.seed = run_seed;
    const ppg::SplitIndices si = ppg::split(corpus, a.sspec);
    ppg::PulseDataset train = corpus.subset(si.train);
    ppg::PulseDataset val = corpus.subset(si.val);
    ppg::PulseDataset test = corpus.subset(si.test);
    train = ppg::adasyn(train, a.adasyn);

    ppg::TrainResult result = ppg::train_model(mspec, train, val, test, a.tspec);

    ordered_json report = result.report.to_json();
    report["config"] = effective;
    write_json_file(g.out_dir + "/report.json", report);
    ppg::write_pulse_csv(g.out_dir + "/test_pulses.csv", test);
    if (result.model) {
        ordered_json extra;
        extra["seed"] = g.seed;
        extra["config"] = effective;
        extra["metrics"] = report["metrics"];
        extra["confusion"] = report["confusion"];
        ppg::save_checkpoint(g.out_dir + "/checkpoint.json", g.out_dir + "/checkpoint.bin",
                             *result.model, mspec, extra);
    }
    std::printf("model=%s acc=%.4f pre=%.4f rec=%.4f f1=%.4f epochs=%zu\n", a.model.c_str(),
                result.report.m.acc, result.report.m.pre, result.report.m.rec, result.report.m.f1,
                result.report.epochs_run);
    return 0;
}

// ---- evaluate ------------------------------------------------------------

int cmd_evaluate(GlobalArgs& g, const std::string& checkpoint_path,
                 const std::string& pulses_path) {
    fs::create_directories(g.out_dir);
    ppg::Checkpoint ckpt = ppg::load_checkpoint(checkpoint_path);
    ppg::PulseDataset data = ppg::read_pulse_csv(pulses_path);

    bool labeled = false;
    for (const auto& r : data.rows) labeled |= r.label >= 0;

    ordered_json out;
    out["checkpoint"] = checkpoint_path;
    out["model"] = ckpt.manifest.at("model");
    if (labeled) {
        std::size_t tp, fp, tn, fn;
        ppg::evaluate_model(*ckpt.model, data, tp, fp, tn, fn);
        const ppg::Metrics m = ppg::metrics(tp, fp, tn, fn);
        out["confusion"] = {{"tp", tp}, {"fp", fp}, {"tn", tn}, {"fn", fn}};
        out["metrics"] = {{"acc", m.acc}, {"pre", m.pre}, {"rec", m.rec}, {"f1", m.f1}};
        std::printf("acc=%.4f pre=%.4f rec=%.4f f1=%.4f\n", m.acc, m.pre, m.rec, m.f1);
    } else {
        const std::vector<double> probs = ppg::predict_probs(*ckpt.model, data);
        ordered_json preds = json::array();
        for (std::size_t i = 0; i < data.size(); ++i)
            preds.push_back({{"source_id", data.rows[i].source_id},
                             {"prob", probs[i]},
                             {"pred", probs[i] >= 0.5 ? 1 : 0}});
        out["predictions"] = preds;
        std::printf("predictions=%zu (unlabeled input)\n", data.size());
    }
    write_json_file(g.out_dir + "/eval_report.json", out);
    return 0;
}

// ---- compare -------------------------------------------------------------

int cmd_compare(GlobalArgs& g, const std::string& pulses_path, const std::string& models_arg,
                const std::string& portions_arg, const std::string& seeds_arg,
                ppg::TrainSpec tspec, const ordered_json& effective) {
    fs::create_directories(g.out_dir);
    std::vector<ppg::ModelKind> models;
    for (const std::string& m : split_csv_list(models_arg))
        models.push_back(ppg::model_kind_from_name(m));
    std::vector<double> portions;
    for (const std::string& p : split_csv_list(portions_arg)) portions.push_back(std::stod(p));
    std::vector<std::uint64_t> seeds;
    for (const std::string& s : split_csv_list(seeds_arg)) seeds.push_back(std::stoull(s));

    ppg::PulseDataset corpus = ppg::read_pulse_csv(pulses_path);
    ppg::CompareResult result = ppg::compare(models, portions, seeds, corpus, ppg::SplitSpec{},
                                             tspec, ppg::AdasynConfig{}, g.threads);
    ppg::write_compare_csv(g.out_dir + "/compare.csv", result);
    ppg::write_curves_csv(g.out_dir + "/curves.csv", result);
    ordered_json summary = result.summary;
    summary["config"] = effective;
    write_json_file(g.out_dir + "/summary.json", summary);
    for (const auto& cell : result.cells) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "cell_%s_p%g_s%llu", cell.model.c_str(), cell.portion,
                      static_cast<unsigned long long>(cell.seed));
        std::string name(buf);
        for (char& c : name)
            if (c == '.') c = '_';
        name += ".json";
        write_json_file(g.out_dir + "/" + name, cell.report.to_json());
    }
    std::printf("cells=%zu -> %s/compare.csv\n", result.cells.size(), g.out_dir.c_str());
    return 0;
}

// ---- report --------------------------------------------------------------

int cmd_report(const std::string& csv_path) {
    std::ifstream f(csv_path);
    if (!f) throw ppg::DataError("cannot open: " + csv_path);
    std::string line;
    if (!std::getline(f, line) || line.rfind("model,portion,seed,", 0) != 0)
        throw ppg::DataError("not a compare CSV: " + csv_path);
    std::printf("%-18s %8s %6s %7s %7s %7s %7s %11s\n", "model", "portion", "seed", "acc", "pre",
                "rec", "f1", "smoothness");
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto fields = split_csv_list(line);
        if (fields.size() < 8) continue;
        std::printf("%-18s %8s %6s %7s %7s %7s %7s %11s\n", fields[0].c_str(), fields[1].c_str(),
                    fields[2].c_str(), fields[3].c_str(), fields[4].c_str(), fields[5].c_str(),
                    fields[6].c_str(), fields[7].c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PPG artifact-detection pipeline: synthesis, preprocessing, training, evaluation"};
    app.require_subcommand(1);

    GlobalArgs g;
    auto* opt_config = app.add_option("--config", g.config_path, "JSON config file");
    auto* opt_seed = app.add_option("--seed", g.seed, "global seed");
    auto* opt_out = app.add_option("--out", g.out_dir, "output directory");
    auto* opt_threads = app.add_option("--threads", g.threads, "worker threads for compare");

    // synth
    auto* synth = app.add_subcommand("synth", "generate synthetic PPG frames + ground truth");
    ppg::GeneratorConfig gen_cfg;
    std::size_t frames = 1;
    auto* o_dur = synth->add_option("--duration", gen_cfg.duration_s, "seconds per frame");
    auto* o_fs = synth->add_option("--sample-rate", gen_cfg.sample_rate_hz, "Hz");
    auto* o_hr = synth->add_option("--hr", gen_cfg.heart_rate_bpm, "mean heart rate (bpm)");
    auto* o_hrs = synth->add_option("--hr-std", gen_cfg.heart_rate_std_bpm, "heart rate std (bpm)");
    auto* o_wa = synth->add_option("--wander-amp", gen_cfg.baseline_wander_amp);
    auto* o_wf = synth->add_option("--wander-freq", gen_cfg.baseline_wander_freq_hz);
    auto* o_ns = synth->add_option("--noise-std", gen_cfg.noise_std);
    auto* o_ar = synth->add_option("--artifact-rate", gen_cfg.artifact_rate,
                                   "target artifact pulse fraction");
    auto* o_fr = synth->add_option("--frames", frames, "number of frames");

    // preprocess
    auto* prep = app.add_subcommand("preprocess", "raw signal CSV -> canonical pulse CSV");
    std::string prep_in, prep_intervals, prep_out = "pulses.csv";
    prep->add_option("--in", prep_in, "raw signal CSV (t_s,ppg)")->required();
    prep->add_option("--intervals", prep_intervals, "intervals.json for ground-truth labels");
    prep->add_option("--out-csv", prep_out, "output pulse CSV path");

    // train
    auto* train = app.add_subcommand("train", "train one classifier, write checkpoint + report");
    TrainArgs ta;
    train->add_option("--pulses", ta.pulses_path, "labeled pulse CSV")->required();
    auto* o_model = train->add_option("--model", ta.model, "classifier kind");
    auto* o_portion = train->add_option("--portion", ta.portion, "stratified corpus fraction");
    auto* o_epochs = train->add_option("--epochs", ta.tspec.max_epochs);
    auto* o_batch = train->add_option("--batch", ta.tspec.batch_size);
    auto* o_lr = train->add_option("--lr", ta.tspec.lr);
    auto* o_patience = train->add_option("--patience", ta.tspec.early_stop_patience);

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "evaluate a checkpoint on a pulse CSV");
    std::string eval_ckpt, eval_pulses;
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint manifest JSON")->required();
    eval->add_option("--pulses", eval_pulses, "pulse CSV")->required();

    // compare
    auto* cmp = app.add_subcommand("compare", "model x portion x seed comparison grid");
    std::string cmp_pulses, cmp_models = "transformer,grn-transformer,mlp,grn-mlp,knn";
    std::string cmp_portions = "0.025,0.05,0.075,0.10", cmp_seeds = "1,2,3";
    ppg::TrainSpec cmp_tspec;
    cmp->add_option("--pulses", cmp_pulses, "labeled pulse CSV")->required();
    auto* o_models = cmp->add_option("--models", cmp_models, "comma-separated model list");
    auto* o_portions = cmp->add_option("--portions", cmp_portions, "comma-separated fractions");
    auto* o_seeds = cmp->add_option("--seeds", cmp_seeds, "comma-separated seeds");
    auto* o_cepochs = cmp->add_option("--epochs", cmp_tspec.max_epochs);
    auto* o_cbatch = cmp->add_option("--batch", cmp_tspec.batch_size);
    auto* o_cpatience = cmp->add_option("--patience", cmp_tspec.early_stop_patience);

    // report
    auto* rep = app.add_subcommand("report", "pretty-print a compare CSV");
    std::string rep_in;
    rep->add_option("--in", rep_in, "compare.csv from the compare subcommand")->required();

    // let --seed/--out/--config/--threads appear after the subcommand name
    for (CLI::App* s : {synth, prep, train, eval, cmp, rep}) s->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitConfig;
    }

    try {
        if (!g.config_path.empty()) {
            std::ifstream cf(g.config_path);
            if (!cf) throw ppg::ConfigError("cannot open config: " + g.config_path);
            g.file = json::parse(cf);
        }
        {
            const json sec = config_section(g, "global");
            merge_opt(opt_seed, sec, "seed", g.seed);
            merge_opt(opt_out, sec, "out", g.out_dir);
            merge_opt(opt_threads, sec, "threads", g.threads);
        }

        if (synth->parsed()) {
            const json sec = config_section(g, "synth");
            merge_opt(o_dur, sec, "duration", gen_cfg.duration_s);
            merge_opt(o_fs, sec, "sample_rate", gen_cfg.sample_rate_hz);
            merge_opt(o_hr, sec, "hr", gen_cfg.heart_rate_bpm);
            merge_opt(o_hrs, sec, "hr_std", gen_cfg.heart_rate_std_bpm);
            merge_opt(o_wa, sec, "wander_amp", gen_cfg.baseline_wander_amp);
            merge_opt(o_wf, sec, "wander_freq", gen_cfg.baseline_wander_freq_hz);
            merge_opt(o_ns, sec, "noise_std", gen_cfg.noise_std);
            merge_opt(o_ar, sec, "artifact_rate", gen_cfg.artifact_rate);
            merge_opt(o_fr, sec, "frames", frames);
            gen_cfg.seed = g.seed;
            gen_cfg.validate();
            ordered_json eff = {{"seed", g.seed},
                               {"duration", gen_cfg.duration_s},
                               {"sample_rate", gen_cfg.sample_rate_hz},
                               {"hr", gen_cfg.heart_rate_bpm},
                               {"hr_std", gen_cfg.heart_rate_std_bpm},
                               {"wander_amp", gen_cfg.baseline_wander_amp},
                               {"wander_freq", gen_cfg.baseline_wander_freq_hz},
                               {"noise_std", gen_cfg.noise_std},
                               {"artifact_rate", gen_cfg.artifact_rate},
                               {"frames", frames}};
            return cmd_synth(g, gen_cfg, frames, eff);
        }
        if (prep->parsed()) {
            ordered_json eff = {{"in", prep_in}, {"intervals", prep_intervals}, {"out", prep_out}};
            return cmd_preprocess(prep_in, prep_intervals, prep_out, eff);
        }
        if (train->parsed()) {
            const json sec = config_section(g, "train");
            merge_opt(o_model, sec, "model", ta.model);
            merge_opt(o_portion, sec, "portion", ta.portion);
            merge_opt(o_epochs, sec, "epochs", ta.tspec.max_epochs);
            merge_opt(o_batch, sec, "batch", ta.tspec.batch_size);
            merge_opt(o_patience, sec, "patience", ta.tspec.early_stop_patience);
            ta.lr_given = o_lr->count() > 0 || sec.contains("lr");
            merge_opt(o_lr, sec, "lr", ta.tspec.lr);
            ordered_json eff = {{"seed", g.seed},       {"pulses", ta.pulses_path},
                               {"model", ta.model},     {"portion", ta.portion},
                               {"epochs", ta.tspec.max_epochs}, {"batch", ta.tspec.batch_size},
                               {"lr", ta.tspec.lr},     {"patience", ta.tspec.early_stop_patience}};
            return cmd_train(g, ta, eff);
        }
        if (eval->parsed()) return cmd_evaluate(g, eval_ckpt, eval_pulses);
        if (cmp->parsed()) {
            const json sec = config_section(g, "compare");
            merge_opt(o_models, sec, "models", cmp_models);
            merge_opt(o_portions, sec, "portions", cmp_portions);
            merge_opt(o_seeds, sec, "seeds", cmp_seeds);
            merge_opt(o_cepochs, sec, "epochs", cmp_tspec.max_epochs);
            merge_opt(o_cbatch, sec, "batch", cmp_tspec.batch_size);
            merge_opt(o_cpatience, sec, "patience", cmp_tspec.early_stop_patience);
            ordered_json eff = {{"seed", g.seed},         {"pulses", cmp_pulses},
                               {"models", cmp_models},   {"portions", cmp_portions},
                               {"seeds", cmp_seeds},     {"epochs", cmp_tspec.max_epochs},
                               {"batch", cmp_tspec.batch_size},
                               {"patience", cmp_tspec.early_stop_patience}};
            return cmd_compare(g, cmp_pulses, cmp_models, cmp_portions, cmp_seeds, cmp_tspec, eff);
        }
        if (rep->parsed()) return cmd_report(rep_in);
    } catch (const ppg::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ppg::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const ppg::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return 0;
}
