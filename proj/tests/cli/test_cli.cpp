#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <json.hpp>

#include "iclseg/png_io.hpp"
#include "iclseg/rng.hpp"

namespace fs = std::filesystem;

namespace {

struct Scratch {
    fs::path path;
    explicit Scratch(const std::string& tag) {
        path = fs::temp_directory_path() /
               ("iclseg_cli_" + tag + "_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~Scratch() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

int run_cli(const std::string& args, const fs::path& log, std::string* output = nullptr) {
    const std::string cmd = std::string(ICLSEG_CLI_PATH) + " " + args + " >" + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    if (output) {
        std::ifstream in(log);
        std::stringstream buffer;
        buffer << in.rdbuf();
        *output = buffer.str();
    }
    if (WIFEXITED(status)) return WEXITSTATUS(status);
    return -1;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

/// Mini semantic corpus: 6 images, classes 1..3 in known rectangles.
void write_semantic_corpus(const fs::path& root) {
    iclseg::Rng rng(5);
    for (int s = 0; s < 6; ++s) {
        const int side = 24;
        std::vector<std::uint8_t> img(static_cast<std::size_t>(side) * side * 3);
        for (auto& v : img) v = static_cast<std::uint8_t>(rng.bounded(256));
        iclseg::write_png_rgb8(root / "images" / ("s" + std::to_string(s) + ".png"), side, side,
                               img.data());

        std::vector<std::uint8_t> ann(static_cast<std::size_t>(side) * side, 0);
        // class 1: top-left 8x8 block in every image
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) ann[static_cast<std::size_t>(y) * side + x] = 1;
        // class 2: bottom strip in even images
        if (s % 2 == 0) {
            for (int y = 16; y < 24; ++y)
                for (int x = 0; x < side; ++x) ann[static_cast<std::size_t>(y) * side + x] = 2;
        }
        // class 3: small 3-pixel fragment (below any sane min-pixels)
        ann[10 * side + 10] = 3;
        ann[10 * side + 11] = 3;
        ann[11 * side + 10] = 3;
        iclseg::write_png_gray8(root / "annotations" / ("s" + std::to_string(s) + ".png"), side,
                                side, ann.data());
    }
}

nlohmann::json load_json(const fs::path& path) {
    std::ifstream in(path);
    nlohmann::json j;
    in >> j;
    return j;
}

}  // namespace

TEST_CASE("build: census matches the known corpus and re-runs are identical") {
    Scratch dir("build");
    write_semantic_corpus(dir.path / "sem");

    const int rc = run_cli("build --input " + (dir.path / "sem").string() + " --output " +
                               (dir.path / "bin").string() + " --min-pixels 4",
                           dir.path / "log.txt");
    REQUIRE(rc == 0);

    const nlohmann::json census = load_json(dir.path / "bin" / "census.json");
    CHECK(census.at("schema") == "icl-seg-census/1");
    // class 1 in all 6 images, class 2 in the 3 even ones, class 3 filtered (3 px < 4)
    REQUIRE(census.at("classes").size() == 2);
    CHECK(census.at("classes")[0].at("class_id") == 1);
    CHECK(census.at("classes")[0].at("pairs") == 6);
    CHECK(census.at("classes")[1].at("class_id") == 2);
    CHECK(census.at("classes")[1].at("pairs") == 3);
    CHECK(census.at("total_pairs") == 9);
    CHECK(fs::exists(dir.path / "bin" / "1" / "s0.png"));
    CHECK(fs::exists(dir.path / "bin" / "1" / "masks" / "s0.png"));
    CHECK(fs::exists(dir.path / "bin" / "build.config.toml"));

    const std::string first = read_file(dir.path / "bin" / "census.json");
    REQUIRE(run_cli("build --input " + (dir.path / "sem").string() + " --output " +
                        (dir.path / "bin").string() + " --min-pixels 4",
                    dir.path / "log2.txt") == 0);
    CHECK(read_file(dir.path / "bin" / "census.json") == first);
}

TEST_CASE("build: empty input exits 2 with a clear message") {
    Scratch dir("build_empty");
    fs::create_directories(dir.path / "sem" / "images");
    std::string output;
    const int rc = run_cli("build --input " + (dir.path / "sem").string() + " --output " +
                               (dir.path / "bin").string(),
                           dir.path / "log.txt", &output);
    CHECK(rc == 2);
    CHECK(output.find("no samples found") != std::string::npos);
}

TEST_CASE("synth + split + embed + eval pipeline") {
    Scratch dir("pipeline");
    const std::string data = (dir.path / "data").string();

    REQUIRE(run_cli("synth --output " + data + " --classes 3 --pairs 8 --size 32 --seed 9",
                    dir.path / "log.txt") == 0);
    REQUIRE(run_cli("split --data " + data + " --eval-fraction 0.25 --seed 3",
                    dir.path / "log.txt") == 0);

    // split manifests are disjoint partitions
    const nlohmann::json manifest = load_json(fs::path(data) / "1" / "split.json");
    CHECK(manifest.at("meta_support").size() == 6);
    CHECK(manifest.at("eval").size() == 2);

    REQUIRE(run_cli("embed --data " + data + " --output " + (dir.path / "emb").string(),
                    dir.path / "log.txt") == 0);
    CHECK(fs::exists(dir.path / "emb" / "class_1.emb"));
    CHECK(fs::exists(dir.path / "emb" / "class_1.emb.json"));

    SUBCASE("eval with full strategy writes a schema-tagged report") {
        const fs::path report = dir.path / "report.json";
        REQUIRE(run_cli("eval --data " + data + " --out " + report.string() +
                            " --support-size 1 --strategy full --threads 2",
                        dir.path / "log.txt") == 0);
        const nlohmann::json j = load_json(report);
        CHECK(j.at("schema") == "icl-seg-report/1");
        CHECK(j.at("per_class").size() == 3);
        CHECK(j.at("config").at("strategy") == "full");
        CHECK(fs::exists(report.string() + ".config.toml"));
    }

    SUBCASE("eval with knn demands embeddings") {
        std::string output;
        const int rc = run_cli("eval --data " + data + " --out " + (dir.path / "r.json").string() +
                                   " --strategy knn",
                               dir.path / "log.txt", &output);
        CHECK(rc == 2);
        CHECK(output.find("--embeddings") != std::string::npos);
    }

    SUBCASE("eval accepts store-backed and toy embeddings") {
        const fs::path report = dir.path / "report_knn.json";
        REQUIRE(run_cli("eval --data " + data + " --out " + report.string() +
                            " --strategy knn --support-size 2 --embeddings " +
                            (dir.path / "emb").string(),
                        dir.path / "log.txt") == 0);
        const fs::path report_toy = dir.path / "report_toy.json";
        REQUIRE(run_cli("eval --data " + data + " --out " + report_toy.string() +
                            " --strategy knn --support-size 2 --embeddings toy",
                        dir.path / "log.txt") == 0);
        // the stores hold exactly the toy embeddings, so results agree
        CHECK(load_json(report).at("mean_miou") == load_json(report_toy).at("mean_miou"));
    }

    SUBCASE("predict writes a mask and a logit dump") {
        const fs::path mask = dir.path / "mask.png";
        const std::string query = data + "/1/c1_p0.png";
        REQUIRE(run_cli("predict --query " + query + " --support " + data +
                            "/1 --use-split --out " + mask.string() + " --logits " +
                            (dir.path / "out.lgt").string() + " --support-size 3",
                        dir.path / "log.txt") == 0);
        CHECK(fs::exists(mask));
        CHECK(fs::exists(dir.path / "out.lgt"));
        CHECK(fs::exists(dir.path / "out.lgt.json"));
        const auto png = iclseg::read_png_labels(mask);
        CHECK(png.height == 32);
        CHECK(png.width == 32);
    }
}

TEST_CASE("sweep emits one CSV row per cell and a replayable config") {
    Scratch dir("sweep");
    const std::string data = (dir.path / "data").string();
    REQUIRE(run_cli("synth --output " + data + " --classes 2 --pairs 10 --size 32 --seed 4",
                    dir.path / "log.txt") == 0);
    REQUIRE(run_cli("split --data " + data, dir.path / "log.txt") == 0);

    const std::string sweep_args =
        "sweep --data " + data + " --out-dir " + (dir.path / "out").string() +
        " --support-sizes 1,2,5,10,20 --strategies knn,random --embeddings toy --threads 2 "
        "--seed 6";
    REQUIRE(run_cli(sweep_args, dir.path / "log.txt") == 0);

    const std::string csv = read_file(dir.path / "out" / "sweep.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 11);  // header + 5x2 cells
    CHECK(fs::exists(dir.path / "out" / "report_s1_knn.json"));
    CHECK(fs::exists(dir.path / "out" / "report_s20_random.json"));

    // replay from the echoed config reproduces the scientific outputs
    const fs::path echoed = dir.path / "out" / "sweep.config.toml";
    REQUIRE(fs::exists(echoed));
    const std::string csv_before = read_file(dir.path / "out" / "sweep.csv");
    const nlohmann::json report_before = load_json(dir.path / "out" / "report_s1_knn.json");

    REQUIRE(run_cli("sweep --config " + echoed.string(), dir.path / "log.txt") == 0);
    CHECK(read_file(dir.path / "out" / "sweep.csv") == csv_before);

    nlohmann::json report_after = load_json(dir.path / "out" / "report_s1_knn.json");
    nlohmann::json before = report_before;
    before.erase("wall_time_seconds");  // the one volatile field
    report_after.erase("wall_time_seconds");
    CHECK(before == report_after);
}

TEST_CASE("eval output is identical for --threads 1 and --threads 8") {
    Scratch dir("threads");
    const std::string data = (dir.path / "data").string();
    REQUIRE(run_cli("synth --output " + data + " --classes 2 --pairs 12 --size 32 --seed 13",
                    dir.path / "log.txt") == 0);
    REQUIRE(run_cli("split --data " + data, dir.path / "log.txt") == 0);

    const std::string common = "eval --data " + data +
                               " --strategy knn --support-size 3 --embeddings toy --out ";
    REQUIRE(run_cli(common + (dir.path / "t1.json").string() + " --threads 1",
                    dir.path / "log.txt") == 0);
    REQUIRE(run_cli(common + (dir.path / "t8.json").string() + " --threads 8",
                    dir.path / "log.txt") == 0);

    nlohmann::json a = load_json(dir.path / "t1.json");
    nlohmann::json b = load_json(dir.path / "t8.json");
    a.erase("wall_time_seconds");
    b.erase("wall_time_seconds");
    CHECK(a == b);
}

TEST_CASE("unknown strategy and missing data exit 2") {
    Scratch dir("errors");
    std::string output;
    CHECK(run_cli("eval --data /nonexistent --out " + (dir.path / "r.json").string(),
                  dir.path / "log.txt", &output) == 2);
    const std::string data = (dir.path / "data").string();
    REQUIRE(run_cli("synth --output " + data + " --classes 2 --pairs 6 --size 32",
                    dir.path / "log.txt") == 0);
    REQUIRE(run_cli("split --data " + data, dir.path / "log.txt") == 0);
    CHECK(run_cli("eval --data " + data + " --out " + (dir.path / "r.json").string() +
                      " --strategy sorcery",
                  dir.path / "log.txt", &output) == 2);
}
