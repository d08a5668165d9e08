#include "mcsam/config.hpp"
#include "mcsam/errors.hpp"

#include "doctest_torch.hpp"

#include <filesystem>
#include <fstream>
#include <random>

using namespace mcsam;
namespace fs = std::filesystem;

TEST_CASE("defaults serialize to every key") {
    RunConfig cfg;
    cfg.sync();
    const auto text = serialize_config(cfg);
    for (const auto& key : config_keys()) {
        CHECK_MESSAGE(text.find(key + " = ") != std::string::npos, key);
    }
    CHECK(text.find("optim.lr = ") != std::string::npos);
    CHECK(text.find("peft.method = mona") != std::string::npos);
}

TEST_CASE("parse of the canonical form is a fixed point") {
    auto cfg = parse_config(R"(
[run]
name = demo   # trailing comment
[encoder]
depth = 6
tap_indices = 1,3,5
global_attn_indices = 5
[peft]
method = lora
[lora]
rank = 8
[decoder]
num_queries = 30
[optim]
lr = 2e-4
)");
    CHECK(cfg.name == "demo");
    CHECK(cfg.model.encoder.depth == 6);
    CHECK(cfg.model.encoder.tap_indices == std::vector<int64_t>{1, 3, 5});
    CHECK(cfg.peft.method == PeftMethod::Lora);
    CHECK(cfg.peft.lora.rank == 8);
    CHECK(cfg.model.decoder.num_queries == 30);
    CHECK(cfg.optim.lr == 2e-4);

    const auto once = serialize_config(cfg);
    const auto twice = serialize_config(parse_config(once));
    CHECK(once == twice);
}

TEST_CASE("overrides") {
    RunConfig cfg;
    apply_override(cfg, "optim.lr=5e-5");
    apply_override(cfg, " train.batch_size = 4 ");
    apply_override(cfg, "peft.method=adapter");
    CHECK(cfg.optim.lr == 5e-5);
    CHECK(cfg.train.batch_size == 4);
    CHECK(cfg.peft.method == PeftMethod::Adapter);
    CHECK(cfg.model.encoder.adapter == BlockAdapter::Bottleneck);
    CHECK_THROWS_AS(apply_override(cfg, "optim.lr"), ConfigError);
    CHECK_THROWS_AS(apply_override(cfg, "optim.learning_rate=1"), ConfigError);
    CHECK_THROWS_AS(apply_override(cfg, "train.batch_size=two"), ConfigError);
    CHECK_THROWS_AS(apply_override(cfg, "peft.method=prefix"), ConfigError);
}

TEST_CASE("malformed text and invalid values") {
    CHECK_THROWS_AS(parse_config("[encoder]\ndepthh = 3\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[encoder\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("just words\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[encoder]\nuse_rel_pos = maybe\n"), ConfigError);

    RunConfig cfg;
    cfg.optim.lr = 0;
    CHECK_THROWS_AS(cfg.validate(false), ConfigError);
    cfg = RunConfig{};
    cfg.schedule.min_lr = 1.0;
    CHECK_THROWS_AS(cfg.validate(false), ConfigError);
    cfg = RunConfig{};
    cfg.data.normalization = "imagenet";
    CHECK_THROWS_AS(cfg.validate(false), ConfigError);
    cfg = RunConfig{};
    cfg.weights.source = WeightSource::Sam;
    cfg.weights.path = "/nonexistent/weights.pth";
    CHECK_THROWS_AS(cfg.validate(false), ConfigError);
    cfg = RunConfig{};
    cfg.data.train_annotations = "/nonexistent/a.json";
    CHECK_THROWS_AS(cfg.validate(true), ConfigError);
}

TEST_CASE("relative paths resolve against the config file") {
    std::random_device rd;
    const auto dir = fs::temp_directory_path() / ("mcsam_cfg_" + std::to_string(rd()));
    fs::create_directories(dir / "sub");
    std::ofstream(dir / "sub" / "run.conf") << "[data]\ntrain_images = ../imgs\n";
    auto cfg = load_config(dir / "sub" / "run.conf");
    CHECK(fs::weakly_canonical(cfg.resolve(cfg.data.train_images)) == fs::weakly_canonical(dir / "imgs"));
    CHECK(cfg.resolve("/abs/path") == fs::path("/abs/path"));
    CHECK_THROWS_AS(load_config(dir / "missing.conf"), ConfigError);
    fs::remove_all(dir);
}

TEST_CASE("shipped tiny configs parse and validate") {
    const fs::path root = fs::path(MCSAM_TEST_DATA_DIR).parent_path().parent_path() / "configs" / "tiny";
    int n = 0;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.path().extension() != ".conf") {
            continue;
        }
        auto cfg = load_config(entry.path());
        CHECK_NOTHROW(cfg.validate(false));
        ++n;
    }
    CHECK(n >= 7);
}
