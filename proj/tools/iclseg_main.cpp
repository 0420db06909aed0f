// iclseg — in-context binary segmentation from image-mask support sets.
//
// Subcommands: build, split, embed, predict, eval, sweep, synth. Every
// command accepts --config <file.toml> (flags win) and echoes its fully
// resolved configuration next to the outputs so a run can be replayed.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "iclseg/dataset.hpp"
#include "iclseg/embedding_store.hpp"
#include "iclseg/evaluation.hpp"
#include "iclseg/png_io.hpp"
#include "iclseg/predictor.hpp"
#include "iclseg/synthbench.hpp"

namespace fs = std::filesystem;
using namespace iclseg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRunFailure = 1;
constexpr int kExitInputError = 2;

void atomic_write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp" + std::to_string(std::random_device{}());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << text;
    }
    fs::rename(tmp, path);
}

/// Echo of the fully resolved run configuration, replayable from the same
/// working directory via `iclseg <cmd> --config <echo file>`.
void write_config_echo(const CLI::App* cmd, const fs::path& path) {
    const CLI::App* root = cmd;
    while (root->get_parent() != nullptr) root = root->get_parent();
    atomic_write_text(path, root->config_to_str(true, true));
}

CLI::App* add_cmd(CLI::App& app, const std::string& name, const std::string& description) {
    CLI::App* cmd = app.add_subcommand(name, description);
    cmd->fallthrough();  // lets --config after the subcommand reach the root app
    return cmd;
}

struct PipelineOpts {
    std::size_t support_size = 10;
    std::string strategy = "full";
    std::string aggregation = "memory";
    double temperature = 1.0;
    int top_k = 30;
    double threshold = 0.5;
    double logit_scale = 8.0;
    std::string upsample = "nearest";
    int stride = 8;
    double positional_weight = 0.25;
    std::size_t capacity = 4096;
    std::size_t prototype_budget = 128;
    std::uint64_t seed = 0;
    std::string embeddings;  // "", "toy", or a directory of class_<id>.emb stores
    unsigned threads = 0;
};

void add_pipeline_options(CLI::App* cmd, PipelineOpts& o) {
    cmd->add_option("--support-size", o.support_size, "support pairs per query")
        ->capture_default_str();
    cmd->add_option("--strategy", o.strategy, "support selection: knn|random|full")
        ->capture_default_str();
    cmd->add_option("--aggregation", o.aggregation, "memory|logit_avg")->capture_default_str();
    cmd->add_option("--temperature", o.temperature, "affinity softmax temperature")
        ->capture_default_str();
    cmd->add_option("--top-k", o.top_k, "sparse readout width, <=0 disables")
        ->capture_default_str();
    cmd->add_option("--threshold", o.threshold, "sigmoid threshold in (0,1)")
        ->capture_default_str();
    cmd->add_option("--logit-scale", o.logit_scale, "label-transfer logit scale")
        ->capture_default_str();
    cmd->add_option("--upsample", o.upsample, "nearest|bilinear")->capture_default_str();
    cmd->add_option("--stride", o.stride, "encoder patch stride in pixels")->capture_default_str();
    cmd->add_option("--positional-weight", o.positional_weight,
                    "weight of the patch-center key features")
        ->capture_default_str();
    cmd->add_option("--capacity", o.capacity, "working-memory entry capacity")
        ->capture_default_str();
    cmd->add_option("--prototype-budget", o.prototype_budget, "long-term prototype budget")
        ->capture_default_str();
    cmd->add_option("--seed", o.seed, "seed for every stochastic choice")->capture_default_str();
    cmd->add_option("--embeddings", o.embeddings,
                    "'toy' for the built-in embedder or a directory of class_<id>.emb stores "
                    "(required for --strategy knn)")
        ->capture_default_str();
    cmd->add_option("--threads", o.threads, "worker threads, 0 = all cores")
        ->capture_default_str();
}

PredictorConfig to_predictor_config(const PipelineOpts& o) {
    PredictorConfig config;
    config.support_size = o.support_size;
    config.strategy = strategy_from_string(o.strategy);
    config.aggregation = aggregation_from_string(o.aggregation);
    config.temperature = o.temperature;
    config.top_k = o.top_k;
    config.threshold = o.threshold;
    config.decoder.logit_scale = static_cast<float>(o.logit_scale);
    if (o.upsample == "nearest") {
        config.decoder.upsample = UpsampleMode::nearest;
    } else if (o.upsample == "bilinear") {
        config.decoder.upsample = UpsampleMode::bilinear;
    } else {
        throw std::invalid_argument("--upsample must be nearest or bilinear");
    }
    config.encoder.stride = o.stride;
    config.encoder.positional_weight = static_cast<float>(o.positional_weight);
    config.memory.capacity = o.capacity;
    config.memory.prototype_budget = o.prototype_budget;
    config.seed = o.seed;
    return config;
}

void require_embeddings_for_knn(const PipelineOpts& o) {
    if (o.strategy == "knn" && o.embeddings.empty()) {
        throw std::invalid_argument(
            "--strategy knn needs --embeddings: pass 'toy' for the built-in embedder or a "
            "directory of class_<id>.emb stores (see 'iclseg embed')");
    }
}

/// Merges the per-class stores under `dir` for the classes at hand. The same
/// id under two classes names the same source image, so collisions carry
/// identical vectors.
EmbeddingSource load_embedding_source(const std::string& spec,
                                      const std::vector<BinaryDataset>& classes) {
    EmbeddingSource source;
    if (spec.empty() || spec == "toy") return source;

    const fs::path dir(spec);
    if (!fs::is_directory(dir)) {
        throw std::invalid_argument("--embeddings: not a directory: " + spec);
    }
    auto store = std::make_shared<std::unordered_map<std::string, GlobalEmbedding>>();
    for (const auto& dataset : classes) {
        const fs::path path = dir / ("class_" + std::to_string(dataset.class_id) + ".emb");
        if (!fs::exists(path)) {
            throw std::invalid_argument("--embeddings: missing store " + path.string() +
                                        " (run 'iclseg embed' first)");
        }
        for (auto& emb : load_embedding_store(path)) {
            const std::string id = emb.id;
            (*store)[id] = std::move(emb);
        }
    }
    source.store = std::move(store);
    return source;
}

std::vector<ClassSplit> load_splits(const fs::path& data_root,
                                    const std::vector<BinaryDataset>& classes) {
    std::vector<ClassSplit> splits;
    splits.reserve(classes.size());
    for (const auto& dataset : classes) {
        const fs::path manifest_path =
            data_root / std::to_string(dataset.class_id) / "split.json";
        if (!fs::exists(manifest_path)) {
            throw std::invalid_argument("missing split manifest " + manifest_path.string() +
                                        " (run 'iclseg split' first)");
        }
        const SplitManifest manifest = read_split_manifest(manifest_path);
        splits.push_back({dataset.class_id, dataset.class_name,
                          apply_split_manifest(dataset.pairs, manifest)});
    }
    return splits;
}

// ---------------------------------------------------------------------------

struct BuildOpts {
    std::string input;
    std::string output;
    std::size_t min_pixels = 16;
};

int cmd_build(const CLI::App* cmd, const BuildOpts& o) {
    const auto samples = load_semantic_dataset(o.input);
    const auto datasets = construct_binary_datasets(samples, o.min_pixels);

    nlohmann::json classes = nlohmann::json::array();
    std::size_t total = 0;
    for (const auto& dataset : datasets) {
        write_binary_dataset_tree(o.output, dataset);
        classes.push_back({{"class_id", dataset.class_id},
                           {"class_name", dataset.class_name},
                           {"pairs", dataset.pairs.size()}});
        total += dataset.pairs.size();
    }
    const nlohmann::json census = {{"schema", "icl-seg-census/1"},
                                   {"min_pixels", o.min_pixels},
                                   {"classes", classes},
                                   {"total_pairs", total}};
    atomic_write_text(fs::path(o.output) / "census.json", census.dump(2) + "\n");
    write_config_echo(cmd, fs::path(o.output) / "build.config.toml");

    std::cout << "built " << datasets.size() << " classes, " << total << " pairs -> " << o.output
              << "\n";
    return kExitOk;
}

struct SplitOpts {
    std::string data;
    double eval_fraction = 0.2;
    std::uint64_t seed = 0;
};

int cmd_split(const CLI::App* cmd, const SplitOpts& o) {
    const auto classes = load_binary_dataset_tree(o.data);
    for (const auto& dataset : classes) {
        const DatasetSplit split = split_dataset(dataset.pairs, o.eval_fraction, o.seed);
        write_split_manifest(fs::path(o.data) / std::to_string(dataset.class_id) / "split.json",
                             split, o.eval_fraction);
        std::cout << "class " << dataset.class_id << ": " << split.meta_support.size()
                  << " meta-support / " << split.eval.size() << " eval\n";
    }
    write_config_echo(cmd, fs::path(o.data) / "split.config.toml");
    return kExitOk;
}

struct EmbedOpts {
    std::string data;
    std::string output;
    int stride = 8;
    double positional_weight = 0.25;
};

int cmd_embed(const CLI::App* cmd, const EmbedOpts& o) {
    const auto classes = load_binary_dataset_tree(o.data);
    EncoderConfig encoder;
    encoder.stride = o.stride;
    encoder.positional_weight = static_cast<float>(o.positional_weight);

    fs::create_directories(o.output);
    for (const auto& dataset : classes) {
        std::vector<GlobalEmbedding> embeddings;
        embeddings.reserve(dataset.pairs.size());
        for (const auto& pair : dataset.pairs) {
            embeddings.push_back(embed_global(pair.image, encoder, pair.id));
        }
        const fs::path path =
            fs::path(o.output) / ("class_" + std::to_string(dataset.class_id) + ".emb");
        write_embedding_store(path, embeddings);
        std::cout << "class " << dataset.class_id << ": " << embeddings.size()
                  << " embeddings -> " << path.string() << "\n";
    }
    write_config_echo(cmd, fs::path(o.output) / "embed.config.toml");
    return kExitOk;
}

struct PredictOpts {
    std::string query;
    std::string support;
    std::string out;
    std::string logits_out;
    bool use_split = false;
    PipelineOpts pipeline;
};

int cmd_predict(const CLI::App* cmd, const PredictOpts& o) {
    require_embeddings_for_knn(o.pipeline);

    const fs::path support_dir(o.support);
    int class_id = 0;
    try {
        class_id = std::stoi(support_dir.filename().string());
    } catch (const std::exception&) {
        class_id = 0;  // not a numeric class dir; fine for ad-hoc support sets
    }
    BinaryDataset dataset = load_binary_class_dir(support_dir, class_id);
    if (o.use_split) {
        const SplitManifest manifest = read_split_manifest(support_dir / "split.json");
        dataset.pairs = apply_split_manifest(dataset.pairs, manifest).meta_support;
    }

    const EmbeddingSource source = load_embedding_source(o.pipeline.embeddings, {dataset});
    const PredictorConfig config = to_predictor_config(o.pipeline);
    const Predictor predictor(dataset.pairs, config, source);

    const std::string query_id = fs::path(o.query).stem().string();
    const Image query = image_from_png(read_png_image(o.query));
    const PredictResult result = predictor.predict(query, query_id);

    write_mask_png(o.out, result.mask);
    if (!o.logits_out.empty()) write_logit_dump(o.logits_out, result.logits, query_id);
    write_config_echo(cmd, fs::path(o.out).string() + ".config.toml");

    std::cout << "query " << query_id << ": " << result.mask.foreground_count()
              << " foreground pixels, support [";
    for (std::size_t i = 0; i < result.selection.chosen.size(); ++i) {
        std::cout << (i ? " " : "") << result.selection.chosen[i];
    }
    std::cout << "] -> " << o.out << "\n";
    return kExitOk;
}

struct EvalOpts {
    std::string data;
    std::string out;
    std::string csv;
    std::string dataset_name = "dataset";
    bool include_background_iou = false;
    PipelineOpts pipeline;
};

int cmd_eval(const CLI::App* cmd, const EvalOpts& o) {
    require_embeddings_for_knn(o.pipeline);

    const auto classes = load_binary_dataset_tree(o.data);
    const auto splits = load_splits(o.data, classes);

    EvalOptions options;
    options.dataset_name = o.dataset_name;
    options.threads = o.pipeline.threads;
    options.embeddings = load_embedding_source(o.pipeline.embeddings, classes);
    options.include_background_iou = o.include_background_iou;

    const PredictorConfig config = to_predictor_config(o.pipeline);
    const EvalReport report = evaluate(splits, config, options);

    nlohmann::json resolved = predictor_config_to_json(config);
    resolved["include_background_iou"] = o.include_background_iou;
    atomic_write_text(o.out, report_to_json(report, resolved).dump(2) + "\n");
    if (!o.csv.empty()) atomic_write_text(o.csv, reports_to_csv({report}));
    write_config_echo(cmd, fs::path(o.out).string() + ".config.toml");

    std::cout << o.dataset_name << " support=" << report.support_size << " strategy="
              << report.strategy << " aggregation=" << report.aggregation
              << " mean_miou=" << report.mean_miou << "\n";
    return kExitOk;
}

struct SweepOpts {
    std::string data;
    std::string out_dir;
    std::string csv;
    std::string dataset_name = "dataset";
    bool include_background_iou = false;
    std::vector<std::size_t> support_sizes = {1, 2, 5, 10, 20, 50};
    std::vector<std::string> strategies = {"knn", "random"};
    PipelineOpts pipeline;
};

int cmd_sweep(const CLI::App* cmd, const SweepOpts& o) {
    for (const auto& strategy : o.strategies) {
        if (strategy == "knn" && o.pipeline.embeddings.empty()) {
            throw std::invalid_argument(
                "sweep includes the knn strategy; pass --embeddings toy or a store directory");
        }
    }

    const auto classes = load_binary_dataset_tree(o.data);
    const auto splits = load_splits(o.data, classes);

    EvalOptions options;
    options.dataset_name = o.dataset_name;
    options.threads = o.pipeline.threads;
    options.embeddings = load_embedding_source(o.pipeline.embeddings, classes);
    options.include_background_iou = o.include_background_iou;

    std::vector<Strategy> strategies;
    strategies.reserve(o.strategies.size());
    for (const auto& s : o.strategies) strategies.push_back(strategy_from_string(s));

    const PredictorConfig base = to_predictor_config(o.pipeline);
    const auto reports = sweep(splits, base, o.support_sizes, strategies, options);

    fs::create_directories(o.out_dir);
    for (const auto& report : reports) {
        PredictorConfig cell = base;
        cell.support_size = report.support_size;
        cell.strategy = strategy_from_string(report.strategy);
        const fs::path path = fs::path(o.out_dir) / ("report_s" + std::to_string(report.support_size) +
                                                     "_" + report.strategy + ".json");
        nlohmann::json resolved = predictor_config_to_json(cell);
        resolved["include_background_iou"] = o.include_background_iou;
        atomic_write_text(path, report_to_json(report, resolved).dump(2) + "\n");
        std::cout << "support=" << report.support_size << " strategy=" << report.strategy
                  << " mean_miou=" << report.mean_miou << "\n";
    }
    const std::string csv_path = o.csv.empty() ? (fs::path(o.out_dir) / "sweep.csv").string() : o.csv;
    atomic_write_text(csv_path, reports_to_csv(reports));
    write_config_echo(cmd, fs::path(o.out_dir) / "sweep.config.toml");
    return kExitOk;
}

struct SynthOpts {
    std::string output;
    std::size_t classes = 4;
    std::size_t pairs = 16;
    int size = 64;
    double noise = 0.05;
    std::uint64_t seed = 0;
};

int cmd_synth(const CLI::App* cmd, const SynthOpts& o) {
    SynthSpec spec;
    spec.n_classes = o.classes;
    spec.pairs_per_class = o.pairs;
    spec.image_size = o.size;
    spec.noise_level = o.noise;
    spec.seed = o.seed;

    const auto datasets = generate(spec);
    for (const auto& dataset : datasets) write_binary_dataset_tree(o.output, dataset);
    write_config_echo(cmd, fs::path(o.output) / "synth.config.toml");
    std::cout << "generated " << o.classes << " classes x " << o.pairs << " pairs -> " << o.output
              << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"iclseg: in-context binary segmentation with memory readout"};
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML config file; command-line flags win");
    app.allow_config_extras(true);

    BuildOpts build_opts;
    auto* build = add_cmd(app, "build", "construct per-class binary datasets from a semantic tree");
    build->add_option("--input", build_opts.input, "semantic dataset root (images/ + annotations/)")
        ->required();
    build->add_option("--output", build_opts.output, "binary dataset root to create")->required();
    build->add_option("--min-pixels", build_opts.min_pixels,
                      "minimum foreground pixels for a pair to qualify")
        ->capture_default_str();

    SplitOpts split_opts;
    auto* split = add_cmd(app, "split", "write seeded meta-support/eval manifests per class");
    split->add_option("--data", split_opts.data, "binary dataset root")->required();
    split->add_option("--eval-fraction", split_opts.eval_fraction, "fraction held out for eval")
        ->capture_default_str();
    split->add_option("--seed", split_opts.seed, "shuffle seed")->capture_default_str();

    EmbedOpts embed_opts;
    auto* embed = add_cmd(app, "embed", "write toy whole-image embedding stores per class");
    embed->add_option("--data", embed_opts.data, "binary dataset root")->required();
    embed->add_option("--output", embed_opts.output, "directory for class_<id>.emb stores")
        ->required();
    embed->add_option("--stride", embed_opts.stride, "encoder stride")->capture_default_str();
    embed->add_option("--positional-weight", embed_opts.positional_weight,
                      "positional key feature weight")
        ->capture_default_str();

    PredictOpts predict_opts;
    auto* predict = add_cmd(app, "predict", "segment one query image from a support directory");
    predict->add_option("--query", predict_opts.query, "query image PNG")->required();
    predict->add_option("--support", predict_opts.support,
                        "class directory with images and masks/")
        ->required();
    predict->add_option("--out", predict_opts.out, "output mask PNG")->required();
    predict->add_option("--logits", predict_opts.logits_out, "optional LGT1 logit dump path");
    predict->add_flag("--use-split", predict_opts.use_split,
                      "restrict support to the split.json meta-support side");
    add_pipeline_options(predict, predict_opts.pipeline);

    EvalOpts eval_opts;
    auto* eval = add_cmd(app, "eval", "evaluate mIoU over the eval split of every class");
    eval->add_option("--data", eval_opts.data, "binary dataset root (with split manifests)")
        ->required();
    eval->add_option("--out", eval_opts.out, "report JSON path")->required();
    eval->add_option("--csv", eval_opts.csv, "optional CSV summary path");
    eval->add_option("--dataset-name", eval_opts.dataset_name, "name echoed into the report")
        ->capture_default_str();
    eval->add_flag("--include-background-iou", eval_opts.include_background_iou,
                   "average foreground and background IoU instead of foreground only");
    add_pipeline_options(eval, eval_opts.pipeline);

    SweepOpts sweep_opts;
    auto* sweep_cmd = add_cmd(app, "sweep", "evaluate a grid of support sizes and strategies");
    sweep_cmd->add_option("--data", sweep_opts.data, "binary dataset root (with split manifests)")
        ->required();
    sweep_cmd->add_option("--out-dir", sweep_opts.out_dir, "directory for per-cell reports")
        ->required();
    sweep_cmd->add_option("--csv", sweep_opts.csv, "CSV summary path (default <out-dir>/sweep.csv)");
    sweep_cmd->add_option("--dataset-name", sweep_opts.dataset_name, "name echoed into reports")
        ->capture_default_str();
    sweep_cmd->add_flag("--include-background-iou", sweep_opts.include_background_iou,
                        "average foreground and background IoU instead of foreground only");
    sweep_cmd->add_option("--support-sizes", sweep_opts.support_sizes, "sizes to sweep")
        ->delimiter(',')
        ->capture_default_str();
    sweep_cmd->add_option("--strategies", sweep_opts.strategies, "strategies to sweep")
        ->delimiter(',')
        ->capture_default_str();
    add_pipeline_options(sweep_cmd, sweep_opts.pipeline);

    SynthOpts synth_opts;
    auto* synth = add_cmd(app, "synth", "generate a deterministic synthetic benchmark tree");
    synth->add_option("--output", synth_opts.output, "binary dataset root to create")->required();
    synth->add_option("--classes", synth_opts.classes, "number of classes")->capture_default_str();
    synth->add_option("--pairs", synth_opts.pairs, "pairs per class")->capture_default_str();
    synth->add_option("--size", synth_opts.size, "image side length")->capture_default_str();
    synth->add_option("--noise", synth_opts.noise, "pixel noise amplitude")->capture_default_str();
    synth->add_option("--seed", synth_opts.seed, "generation seed")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInputError;
    }

    try {
        if (build->parsed()) return cmd_build(build, build_opts);
        if (split->parsed()) return cmd_split(split, split_opts);
        if (embed->parsed()) return cmd_embed(embed, embed_opts);
        if (predict->parsed()) return cmd_predict(predict, predict_opts);
        if (eval->parsed()) return cmd_eval(eval, eval_opts);
        if (sweep_cmd->parsed()) return cmd_sweep(sweep_cmd, sweep_opts);
        if (synth->parsed()) return cmd_synth(synth, synth_opts);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInputError;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInputError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRunFailure;
    }
    return kExitInputError;
}
