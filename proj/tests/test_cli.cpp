#include <catch2/catch.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "noboxlab/cli/config.hpp"
#include "noboxlab/cli/orchestrator.hpp"
#include "noboxlab/core/errors.hpp"
#include "noboxlab/data/dataset.hpp"
#include "noboxlab/data/synth.hpp"
#include "noboxlab/models/encoder.hpp"
#include "noboxlab/models/surrogate.hpp"
#include "noboxlab/models/target.hpp"
#include "noboxlab/train/target_train.hpp"
#include "test_util.hpp"

using namespace noboxlab;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// A tiny but complete corpus: 4 grating classes, 6 samples each, split
// half/half between surrogate tuning and target training.
struct ToyCorpus {
    TempDir tmp;
    DatasetManifest manifest;
    std::string manifest_path;
    std::string assignment_path;
    std::string runs;

    ToyCorpus()
        : manifest(write_synthetic_dataset(
              tmp.file("data"),
              SynthSpec::make(4, 6, ImageShape{16, 16, 1}, 7, "toy"))) {
        manifest_path = tmp.file("data/manifest.tsv");
        auto roles = split_roles(
            manifest, {{"surrogate-tune", 0.5}, {"target-train", 0.5}});
        assignment_path = tmp.file("data/assignment.tsv");
        write_assignment(assignment_path, roles);
        runs = tmp.file("runs");
    }

    RunConfig base() const {
        RunConfig cfg;
        cfg.set("dataset.manifest", manifest_path);
        cfg.set("dataset.assignment", assignment_path);
        cfg.set("out.dir", runs);
        return cfg;
    }
};

}  // namespace

TEST_CASE("config parses layered dotted keys with overrides", "[cli]") {
    RunConfig cfg = RunConfig::from_text(
        "# comment line\n"
        "\n"
        "margin.m = 0.15\n"
        "  train.epochs =  30  \n"
        "margin.m = 0.2\n",          // later line wins
        "base.conf");
    CHECK(cfg.get_double("margin.m") == 0.2);
    CHECK(cfg.get_size("train.epochs") == 30);
    CHECK(cfg.entries().size() == 2);

    cfg.overlay_text("margin.m = 0.3\nbudget.epsilon = 16/255\n", "more.conf");
    CHECK(cfg.get_double("margin.m") == 0.3);
    cfg.set("margin.m", "0.4");
    CHECK(cfg.get_double("margin.m") == 0.4);
    CHECK(cfg.has("budget.epsilon"));
    CHECK_FALSE(cfg.has("missing.key"));

    TempDir tmp;
    {
        std::ofstream out(tmp.file("a.conf"));
        out << "seed = 9\nname = hello\n";
    }
    RunConfig file_cfg = RunConfig::from_file(tmp.file("a.conf"));
    CHECK(file_cfg.get_u64("seed") == 9);
    CHECK(file_cfg.get_string("name") == "hello");
}

TEST_CASE("config numeric getters parse decimals ratios and bools", "[cli]") {
    RunConfig cfg = RunConfig::from_text(
        "a = 0.15\nb = 16/255\nc = 42\nd = true\ne = off\nf = 1e-3\n");
    CHECK(cfg.get_double("a") == 0.15);
    CHECK(cfg.get_double("b") == Approx(16.0 / 255.0).epsilon(1e-15));
    CHECK(cfg.get_double("f") == 1e-3);
    CHECK(cfg.get_size("c") == 42);
    CHECK(cfg.get_u64("c") == 42);
    CHECK(cfg.get_bool("d"));
    CHECK_FALSE(cfg.get_bool("e"));

    // Fallbacks apply only when the key is absent.
    CHECK(cfg.get_double("nope", 2.5) == 2.5);
    CHECK(cfg.get_size("nope", 7) == 7);
    CHECK(cfg.get_string("nope", "x") == "x");
    CHECK(cfg.get_bool("nope", true));
    CHECK(cfg.get_double("a", 99.0) == 0.15);
}

TEST_CASE("config errors name the offending key and line", "[cli]") {
    RunConfig cfg = RunConfig::from_text("a = hello\nn = -3\nz = 1/0\n");
    try {
        cfg.get_double("margin.m");
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        CHECK(e.key == "margin.m");
        CHECK(std::string(e.what()).find("margin.m") != std::string::npos);
    }
    try {
        cfg.get_double("a");
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        CHECK(e.key == "a");
    }
    CHECK_THROWS_AS(cfg.get_size("n"), ValidationError);
    CHECK_THROWS_AS(cfg.get_double("z"), ValidationError);
    CHECK_THROWS_AS(cfg.get_bool("a"), ValidationError);

    // Malformed lines report origin and line number.
    try {
        RunConfig::from_text("good = 1\n\nno equals sign here\n", "file.conf");
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("file.conf:3") != std::string::npos);
    }
    CHECK_THROWS_AS(RunConfig::from_text("bad key! = 1\n"), ValidationError);
    RunConfig direct;
    CHECK_THROWS_AS(direct.set("spaced key", "1"), ValidationError);
}

TEST_CASE("config hash covers semantic keys only", "[cli]") {
    RunConfig a = RunConfig::from_text("x = 1\ny = 2\n");
    RunConfig b;
    b.set("y", "2");
    b.set("x", "1");
    CHECK(a.config_hash() == b.config_hash());  // order-independent

    RunConfig c = RunConfig::from_text("x = 1\ny = 3\n");
    CHECK(a.config_hash() != c.config_hash());

    RunConfig d = RunConfig::from_text("x = 1\ny = 2\nseed = 5\n");
    CHECK(a.config_hash() != d.config_hash());  // the seed is semantic

    // Output placement does not change identity.
    RunConfig e = RunConfig::from_text(
        "x = 1\ny = 2\nout.dir = /elsewhere\nrun.id = custom\n");
    CHECK(a.config_hash() == e.config_hash());
}

TEST_CASE("synthetic dataset is deterministic and class-structured", "[cli]") {
    TempDir tmp;
    SynthSpec spec = SynthSpec::make(4, 3, ImageShape{16, 16, 1}, 11, "toy");
    DatasetManifest m1 = write_synthetic_dataset(tmp.file("d1"), spec);
    DatasetManifest m2 = write_synthetic_dataset(tmp.file("d2"), spec);

    CHECK(m1.name() == "toy");
    CHECK(m1.n_classes() == 4);
    CHECK(m1.items().size() == 12);
    CHECK(m1.image_size() == ImageShape{16, 16, 1});

    InMemoryDataset d1 = InMemoryDataset::load(m1);
    InMemoryDataset d2 = InMemoryDataset::load(m2);
    REQUIRE(d1.size() == d2.size());
    CHECK(d1.hashes() == d2.hashes());  // byte-identical rendering
    CHECK(d1.labels() == d2.labels());

    // Distinct samples and distinct classes.
    std::set<std::string> unique(d1.hashes().begin(), d1.hashes().end());
    CHECK(unique.size() == d1.size());

    DatasetManifest m3 = write_synthetic_dataset(
        tmp.file("d3"), SynthSpec::make(4, 3, ImageShape{16, 16, 1}, 12, "toy"));
    InMemoryDataset d3 = InMemoryDataset::load(m3);
    CHECK(d1.hashes() != d3.hashes());  // seed matters

    CHECK_THROWS_AS(
        write_synthetic_dataset(tmp.file("bad"),
                                SynthSpec::make(1, 3, ImageShape{16, 16, 1}, 1)),
        DomainError);
    CHECK_THROWS_AS(
        write_synthetic_dataset(tmp.file("bad"),
                                SynthSpec::make(4, 3, ImageShape{4, 4, 1}, 1)),
        DomainError);
}

TEST_CASE("role splits honor fractions per class", "[cli]") {
    TempDir tmp;
    DatasetManifest m = write_synthetic_dataset(
        tmp.file("d"), SynthSpec::make(3, 7, ImageShape{16, 16, 1}, 2, "toy"));

    auto roles = split_roles(m, {{"a", 0.5}, {"b", 0.5}});
    REQUIRE(roles.size() == 21);
    std::map<std::string, std::map<std::size_t, std::size_t>> counts;
    for (const ManifestItem& item : m.items())
        counts[roles.at(item.id)][item.label] += 1;
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(counts["a"][c] == 3);  // floor(0.5 * 7)
        CHECK(counts["b"][c] == 4);  // last role absorbs the remainder
    }

    auto three = split_roles(m, {{"x", 0.3}, {"y", 0.3}, {"z", 0.4}});
    std::map<std::string, std::size_t> total;
    for (const auto& [id, role] : three) total[role] += 1;
    CHECK(total["x"] == 6);   // floor(0.3 * 7) = 2 per class
    CHECK(total["y"] == 6);
    CHECK(total["z"] == 9);

    CHECK_THROWS_AS(split_roles(m, {}), DomainError);
    CHECK_THROWS_AS(split_roles(m, {{"a", 0.5}, {"b", 0.4}}), DomainError);
    CHECK_THROWS_AS(split_roles(m, {{"a", -0.5}, {"b", 1.5}}), DomainError);
}

TEST_CASE("run manifests round-trip and verify artifacts", "[cli]") {
    TempDir tmp;
    {
        std::ofstream out(tmp.file("model.ckpt"));
        out << "stub";
    }
    RunManifest m;
    m.run_id = "r1";
    m.command = "finetune";
    m.config_hash = "abc123";
    m.status = "ok";
    m.started_at = "2026-01-01T00:00:00Z";
    m.finished_at = "2026-01-01T00:01:00Z";
    m.artifacts = {"model.ckpt"};
    m.disjointness = {{"surrogate-tune vs target-train", "pass"}};
    m.tool_version = "0.1.0";

    m.write(tmp.file("manifest.json"));
    RunManifest back = RunManifest::read(tmp.file("manifest.json"));
    CHECK(back.run_id == "r1");
    CHECK(back.command == "finetune");
    CHECK(back.config_hash == "abc123");
    CHECK(back.status == "ok");
    CHECK(back.artifacts == m.artifacts);
    CHECK(back.disjointness.at("surrogate-tune vs target-train") == "pass");
    CHECK(back.error.empty());

    RunManifest missing = m;
    missing.artifacts = {"not_there.ckpt"};
    CHECK_THROWS_AS(missing.write(tmp.file("manifest.json")),
                    PersistenceError);

    RunManifest bad_status = m;
    bad_status.status = "sideways";
    CHECK_THROWS_AS(bad_status.write(tmp.file("manifest.json")), DomainError);

    {
        std::ofstream out(tmp.file("garbled.json"));
        out << "{ not json";
    }
    CHECK_THROWS_AS(RunManifest::read(tmp.file("garbled.json")),
                    PersistenceError);
    CHECK_THROWS_AS(RunManifest::read(tmp.file("absent.json")),
                    PersistenceError);
}

TEST_CASE("command names round trip", "[cli]") {
    for (Command c :
         {Command::finetune, Command::train_gen, Command::attack, Command::eval,
          Command::adv_train, Command::audit, Command::export_emb,
          Command::ablate_proportion})
        CHECK(command_from_name(command_name(c)) == c);
    CHECK(std::string(command_name(Command::train_gen)) == "train-gen");
    CHECK_THROWS_AS(command_from_name("launch-missiles"), ValidationError);
}

TEST_CASE("dry run writes a plan manifest and nothing else", "[cli]") {
    ToyCorpus toy;
    RunConfig cfg = toy.base();
    cfg.set("train.epochs", "1");
    cfg.set("run.id", "plan");

    RunManifest m = run_pipeline(cfg, Command::finetune, /*dry_run=*/true);
    CHECK(m.status == "dry");
    CHECK(m.artifacts.empty());
    CHECK(m.run_id == "plan");
    CHECK(m.config_hash == cfg.config_hash());
    CHECK_FALSE(m.started_at.empty());

    namespace fs = std::filesystem;
    fs::path dir = fs::path(toy.runs) / "plan";
    REQUIRE(fs::exists(dir / "manifest.json"));
    std::size_t n = 0;
    for ([[maybe_unused]] const auto& entry : fs::directory_iterator(dir)) ++n;
    CHECK(n == 1);  // the manifest is the only output of a dry run

    RunManifest back = RunManifest::read((dir / "manifest.json").string());
    CHECK(back.status == "dry");
}

TEST_CASE("validation failures precede any output", "[cli]") {
    ToyCorpus toy;
    namespace fs = std::filesystem;

    // Missing required key, reported by name.
    RunConfig no_eps = toy.base();
    no_eps.set("surrogate.checkpoint", toy.manifest_path);  // exists, wrong use
    no_eps.set("train.epochs", "1");
    try {
        run_pipeline(no_eps, Command::train_gen);
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        CHECK(e.key == "budget.epsilon");
    }
    CHECK_FALSE(fs::exists(toy.runs));  // nothing was created

    // Dangling path.
    RunConfig bad_path = toy.base();
    bad_path.set("dataset.manifest", toy.tmp.file("nowhere.tsv"));
    bad_path.set("train.epochs", "1");
    try {
        run_pipeline(bad_path, Command::finetune);
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        CHECK(e.key == "dataset.manifest");
    }

    // Unknown attacker kind.
    RunConfig bad_kind = toy.base();
    bad_kind.set("target.checkpoint", toy.manifest_path);
    bad_kind.set("budget.epsilon", "0.1");
    bad_kind.set("attacker.kind", "wishful");
    CHECK_THROWS_AS(run_pipeline(bad_kind, Command::eval), ValidationError);

    // A claimed run directory is never overwritten.
    fs::create_directories(fs::path(toy.runs) / "taken");
    RunConfig clash = toy.base();
    clash.set("train.epochs", "1");
    clash.set("run.id", "taken");
    CHECK_THROWS_AS(run_pipeline(clash, Command::finetune), ValidationError);
}

TEST_CASE("toy pipeline produces a full artifact chain", "[cli][pipeline]") {
    ToyCorpus toy;
    namespace fs = std::filesystem;
    auto in_run = [&](const std::string& run, const std::string& rel) {
        return (fs::path(toy.runs) / run / rel).string();
    };

    // 1. Train a standard target on the target-train role.
    RunConfig tcfg = toy.base();
    tcfg.set("pgd.enabled", "false");
    tcfg.set("train.epochs", "2");
    tcfg.set("train.lr", "0.05");
    tcfg.set("run.id", "tgt");
    RunManifest tman = run_pipeline(tcfg, Command::adv_train);
    CHECK(tman.status == "ok");
    REQUIRE(fs::exists(in_run("tgt", "target.ckpt")));
    TargetModel target = restore_target(in_run("tgt", "target.ckpt"));
    CHECK(std::string(target_provenance_name(target.meta().provenance)) ==
          "standard");

    // 2. Margin fine-tune a surrogate on the tuning role.
    RunConfig scfg = toy.base();
    scfg.set("train.epochs", "2");
    scfg.set("encoder.dim", "16");
    scfg.set("run.id", "sur");
    RunManifest sman = run_pipeline(scfg, Command::finetune);
    CHECK(sman.status == "ok");
    CHECK(sman.disjointness.at("surrogate-tune vs target-train") == "pass");
    REQUIRE(fs::exists(in_run("sur", "surrogate.ckpt")));
    std::string trace = slurp(in_run("sur", "finetune_trace.csv"));
    CHECK(trace.rfind("epoch,loss,acc,lr,min_margin\n0,na,na,na,", 0) == 0);

    // 3. Same config, fresh run id: byte-identical training trace.
    RunConfig scfg2 = scfg;
    scfg2.set("run.id", "sur2");
    run_pipeline(scfg2, Command::finetune);
    CHECK(slurp(in_run("sur2", "finetune_trace.csv")) == trace);
    SurrogateModel s1 = restore_surrogate(in_run("sur", "surrogate.ckpt"));
    SurrogateModel s2 = restore_surrogate(in_run("sur2", "surrogate.ckpt"));
    CHECK(s1.weights_digest() == s2.weights_digest());

    // 4. Train the generator against the surrogate.
    RunConfig gcfg = toy.base();
    gcfg.set("surrogate.checkpoint", in_run("sur", "surrogate.ckpt"));
    gcfg.set("budget.epsilon", "0.1");
    gcfg.set("train.epochs", "2");
    gcfg.set("train.optimizer", "adamw");
    gcfg.set("train.lr", "0.002");
    gcfg.set("gen.depth", "2");
    gcfg.set("gen.base", "8");
    gcfg.set("run.id", "gen");
    RunManifest gman = run_pipeline(gcfg, Command::train_gen);
    CHECK(gman.status == "ok");
    CHECK(gman.disjointness.at("surrogate-tune vs target-train") == "pass");
    REQUIRE(fs::exists(in_run("gen", "generator.ckpt")));

    // 5. Craft images to disk.
    RunConfig acfg = toy.base();
    acfg.set("generator.checkpoint", in_run("gen", "generator.ckpt"));
    acfg.set("budget.epsilon", "0.1");
    acfg.set("run.id", "craft");
    RunManifest aman = run_pipeline(acfg, Command::attack);
    CHECK(aman.status == "ok");
    std::string stats = slurp(in_run("craft", "crafted_stats.csv"));
    CHECK(stats.rfind("id,linf_delta\n", 0) == 0);
    std::size_t n_files = 0;
    for ([[maybe_unused]] const auto& e :
         fs::directory_iterator(in_run("craft", "adv")))
        ++n_files;
    CHECK(n_files == 12);  // one crafted image per tuning-role sample

    // 6. Evaluate the generator attack against the target.
    RunConfig ecfg = toy.base();
    ecfg.set("target.checkpoint", in_run("tgt", "target.ckpt"));
    ecfg.set("generator.checkpoint", in_run("gen", "generator.ckpt"));
    ecfg.set("budget.epsilon", "0.1");
    ecfg.set("run.id", "ev");
    RunManifest eman = run_pipeline(ecfg, Command::eval);
    CHECK(eman.status == "ok");
    nlohmann::json rep =
        nlohmann::json::parse(slurp(in_run("ev", "report.txt.json")));
    REQUIRE(rep.size() == 1);
    CHECK(rep[0]["target"] == "target");
    CHECK(rep[0]["provenance"] == "standard");
    REQUIRE(rep[0]["rows"].size() == 1);
    CHECK(rep[0]["rows"][0]["dataset"] == "toy");
    double clean = rep[0]["rows"][0]["clean"].get<double>();
    double adv = rep[0]["rows"][0]["adv"].get<double>();
    double asr = rep[0]["rows"][0]["asr"].get<double>();
    CHECK(clean >= 0.0);
    CHECK(clean <= 100.0);
    CHECK(asr == Approx(clean - adv).margin(1e-12));

    // 7. The identity attacker scores exactly zero.
    RunConfig icfg = toy.base();
    icfg.set("target.checkpoint", in_run("tgt", "target.ckpt"));
    icfg.set("budget.epsilon", "0");
    icfg.set("attacker.kind", "identity");
    icfg.set("run.id", "idnull");
    run_pipeline(icfg, Command::eval);
    nlohmann::json idrep =
        nlohmann::json::parse(slurp(in_run("idnull", "report.txt.json")));
    CHECK(idrep[0]["rows"][0]["asr"].get<double>() == 0.0);

    // 8. Audit and embedding export over the tuned surrogate.
    RunConfig ucfg = toy.base();
    ucfg.set("surrogate.checkpoint", in_run("sur", "surrogate.ckpt"));
    ucfg.set("run.id", "aud");
    run_pipeline(ucfg, Command::audit);
    std::string audit_csv = slurp(in_run("aud", "margin_audit.csv"));
    CHECK(audit_csv.rfind("class,count,mean_own_similarity,", 0) == 0);
    nlohmann::json audit =
        nlohmann::json::parse(slurp(in_run("aud", "margin_audit.json")));
    CHECK(audit["per_class"].size() == 4);
    CHECK(std::isfinite(audit["overall_min_margin"].get<double>()));

    RunConfig xcfg = toy.base();
    xcfg.set("surrogate.checkpoint", in_run("sur", "surrogate.ckpt"));
    xcfg.set("run.id", "emb");
    run_pipeline(xcfg, Command::export_emb);
    CHECK(slurp(in_run("emb", "embeddings.csv")).rfind("id,label,e_0", 0) == 0);

    // Every manifest lists only artifacts that exist.
    for (const std::string& run : {"tgt", "sur", "gen", "craft", "ev"}) {
        RunManifest m = RunManifest::read(in_run(run, "manifest.json"));
        CHECK(m.status == "ok");
        CHECK_FALSE(m.artifacts.empty());
        for (const std::string& rel : m.artifacts)
            CHECK(fs::exists(fs::path(toy.runs) / run / rel));
        CHECK(m.tool_version == std::string("0.1.0"));
        CHECK_FALSE(m.finished_at.empty());
    }

    // Reusing a run id refuses to clobber the first run.
    CHECK_THROWS_AS(run_pipeline(scfg, Command::finetune), ValidationError);
}

TEST_CASE("disjointness overlap refuses to run and marks the manifest",
          "[cli]") {
    ToyCorpus toy;
    namespace fs = std::filesystem;

    // Plant identical content on both sides of the split: copy a tuning-role
    // image's file over a target-role image's file.
    auto assignment = read_assignment(toy.assignment_path);
    std::string tune_id, target_id;
    for (const ManifestItem& item : toy.manifest.items()) {
        if (assignment.at(item.id) == "surrogate-tune" && tune_id.empty())
            tune_id = item.id;
        if (assignment.at(item.id) == "target-train" && target_id.empty())
            target_id = item.id;
    }
    REQUIRE_FALSE(tune_id.empty());
    REQUIRE_FALSE(target_id.empty());
    fs::path base = fs::path(toy.manifest_path).parent_path();
    fs::copy_file(base / toy.manifest.item(tune_id).path,
                  base / toy.manifest.item(target_id).path,
                  fs::copy_options::overwrite_existing);

    RunConfig cfg = toy.base();
    cfg.set("train.epochs", "1");
    cfg.set("run.id", "overlap");
    CHECK_THROWS_AS(run_pipeline(cfg, Command::finetune), DisjointnessError);

    // The aborted run leaves a manifest marked failed.
    RunManifest failed = RunManifest::read(
        (fs::path(toy.runs) / "overlap" / "manifest.json").string());
    CHECK(failed.status == "failed");
    CHECK_FALSE(failed.error.empty());
    CHECK(failed.artifacts.empty());

    // The generator-training entry point refuses the same overlap.
    SurrogateModel stub = build_surrogate(
        EncoderSpec::make(EncoderKind::compact_conv, 8, toy.manifest.image_size()),
        toy.manifest.n_classes(), 1);
    persist_surrogate(stub, toy.tmp.file("stub.ckpt"));
    RunConfig gcfg = toy.base();
    gcfg.set("surrogate.checkpoint", toy.tmp.file("stub.ckpt"));
    gcfg.set("budget.epsilon", "0.1");
    gcfg.set("train.epochs", "1");
    gcfg.set("run.id", "overlap2");
    CHECK_THROWS_AS(run_pipeline(gcfg, Command::train_gen),
                    DisjointnessError);
}

TEST_CASE("cli maps errors to exit codes", "[cli]") {
    ToyCorpus toy;
    namespace fs = std::filesystem;

    auto run = [](std::vector<std::string> args) {
        std::vector<const char*> argv = {"noboxlab"};
        for (const std::string& a : args) argv.push_back(a.c_str());
        return cli_main(static_cast<int>(argv.size()), argv.data());
    };

    CHECK(run({"--help"}) == 0);
    CHECK(run({}) == 2);
    CHECK(run({"no-such-command"}) == 2);
    CHECK(run({"finetune", "--config"}) == 2);       // missing argument
    CHECK(run({"finetune", "--set", "novalue"}) == 2);
    CHECK(run({"finetune", "--bogus-flag"}) == 2);

    // Missing required keys surface as validation failures.
    CHECK(run({"finetune", "--set", "dataset.manifest=" + toy.manifest_path,
               "--set", "out.dir=" + toy.runs}) == 2);  // no train.epochs

    // A config file plus overrides drives a dry run to success.
    std::string conf = toy.tmp.file("run.conf");
    {
        std::ofstream out(conf);
        out << "dataset.manifest = " << toy.manifest_path << "\n"
            << "dataset.assignment = " << toy.assignment_path << "\n"
            << "train.epochs = 1\n";
    }
    CHECK(run({"finetune", "--config", conf, "--set", "out.dir=" + toy.runs,
               "--set", "run.id=dry1", "--seed", "3", "--dry-run"}) == 0);
    RunManifest m = RunManifest::read(
        (fs::path(toy.runs) / "dry1" / "manifest.json").string());
    CHECK(m.status == "dry");

    // Disjointness refusals map to exit 3.
    auto assignment = read_assignment(toy.assignment_path);
    std::string tune_id, target_id;
    for (const ManifestItem& item : toy.manifest.items()) {
        if (assignment.at(item.id) == "surrogate-tune" && tune_id.empty())
            tune_id = item.id;
        if (assignment.at(item.id) == "target-train" && target_id.empty())
            target_id = item.id;
    }
    fs::path base = fs::path(toy.manifest_path).parent_path();
    fs::copy_file(base / toy.manifest.item(tune_id).path,
                  base / toy.manifest.item(target_id).path,
                  fs::copy_options::overwrite_existing);
    CHECK(run({"finetune", "--config", conf, "--set", "out.dir=" + toy.runs,
               "--set", "run.id=clash3"}) == 3);

    // Runtime failures (a checkpoint of the wrong kind) map to exit 4.
    CHECK(run({"attack", "--config", conf, "--set", "out.dir=" + toy.runs,
               "--set", "generator.checkpoint=" + toy.manifest_path, "--set",
               "budget.epsilon=0.1", "--set", "run.id=wreck"}) == 4);
    RunManifest wreck = RunManifest::read(
        (fs::path(toy.runs) / "wreck" / "manifest.json").string());
    CHECK(wreck.status == "failed");
    CHECK_FALSE(wreck.error.empty());
}

TEST_CASE("output root falls back to the environment", "[cli]") {
    ToyCorpus toy;
    namespace fs = std::filesystem;
    std::string env_root = toy.tmp.file("env_runs");
    setenv("NOBOXLAB_OUT", env_root.c_str(), 1);

    RunConfig cfg;  // deliberately no out.dir
    cfg.set("dataset.manifest", toy.manifest_path);
    cfg.set("train.epochs", "1");
    RunManifest m = run_pipeline(cfg, Command::finetune, /*dry_run=*/true);
    unsetenv("NOBOXLAB_OUT");

    CHECK(m.run_id.rfind("finetune-", 0) == 0);  // default id names the command
    CHECK(fs::exists(fs::path(env_root) / m.run_id / "manifest.json"));
}

TEST_CASE("proportion ablation sweeps tuning shares", "[cli][pipeline]") {
    ToyCorpus toy;
    namespace fs = std::filesystem;

    // Prerequisite target, trained directly.
    InMemoryDataset target_data = InMemoryDataset::load(
        toy.manifest, read_assignment(toy.assignment_path), "target-train");
    TrainSchedule sched = TrainSchedule::make(OptimizerKind::sgd, 0.05, 0.0, 8,
                                              2, true, 5);
    TargetModel target = train_target(target_data, sched);
    std::string target_path = toy.tmp.file("target.ckpt");
    persist_target(target, target_path);

    RunConfig cfg = toy.base();
    cfg.set("target.checkpoint", target_path);
    cfg.set("train.epochs", "1");
    cfg.set("encoder.dim", "16");
    cfg.set("gentrain.epochs", "1");
    cfg.set("gen.depth", "2");
    cfg.set("gen.base", "8");
    cfg.set("budget.epsilon", "0.1");
    cfg.set("ablate.grid", "50,100");
    cfg.set("run.id", "abl");
    RunManifest m = run_pipeline(cfg, Command::ablate_proportion);
    CHECK(m.status == "ok");
    CHECK(m.disjointness.size() == 2);
    for (const auto& [check, verdict] : m.disjointness)
        CHECK(verdict == "pass");

    fs::path dir = fs::path(toy.runs) / "abl";
    std::string table = slurp((dir / "ablation.csv").string());
    std::istringstream lines(table);
    std::string header, row50, row100, extra;
    REQUIRE(std::getline(lines, header));
    REQUIRE(std::getline(lines, row50));
    REQUIRE(std::getline(lines, row100));
    CHECK_FALSE(std::getline(lines, extra));
    CHECK(header == "proportion,n_tune,clean,adv,asr");
    // Tuning role holds 3 per class across 4 classes; half keeps 2 per class.
    CHECK(row50.rfind("50,8,", 0) == 0);
    CHECK(row100.rfind("100,12,", 0) == 0);

    for (const std::string& leg : {"p050", "p100"}) {
        CHECK(fs::exists(dir / leg / "surrogate.ckpt"));
        CHECK(fs::exists(dir / leg / "generator.ckpt"));
        CHECK(fs::exists(dir / leg / "report.txt.json"));
    }
    for (const std::string& rel : m.artifacts)
        CHECK(fs::exists(dir / rel));
}
