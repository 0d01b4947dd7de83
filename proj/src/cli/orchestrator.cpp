#include "noboxlab/cli/orchestrator.hpp"

#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "noboxlab/attack/generator.hpp"
#include "noboxlab/attack/pgd.hpp"
#include "noboxlab/core/errors.hpp"
#include "noboxlab/core/fsutil.hpp"
#include "noboxlab/core/log.hpp"
#include "noboxlab/core/version.hpp"
#include "noboxlab/data/dataset.hpp"
#include "noboxlab/eval/harness.hpp"
#include "noboxlab/geometry/embedding.hpp"
#include "noboxlab/models/surrogate.hpp"
#include "noboxlab/models/target.hpp"
#include "noboxlab/train/margin.hpp"
#include "noboxlab/train/target_train.hpp"

namespace fs = std::filesystem;

namespace noboxlab {

namespace {

constexpr const char* kOutEnvVar = "NOBOXLAB_OUT";

const std::pair<Command, const char*> kCommandNames[] = {
    {Command::finetune, "finetune"},
    {Command::train_gen, "train-gen"},
    {Command::attack, "attack"},
    {Command::eval, "eval"},
    {Command::adv_train, "adv-train"},
    {Command::audit, "audit"},
    {Command::export_emb, "export-emb"},
    {Command::ablate_proportion, "ablate-proportion"},
};

std::string iso_utc_now() {
    std::time_t now = std::chrono::system_clock::to_time_t(
        std::chrono::system_clock::now());
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

std::string fmt12(double v) {
    if (std::isnan(v)) return "na";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

// ------------------------------------------------------------ config access

// Role names are configurable; the evaluation role defaults to the tuning
// role because the transfer protocol attacks the very images the surrogate
// was tuned on. Only the target-training role must stay disjoint.
struct Roles {
    std::string tune;
    std::string target;
    std::string eval;
};

Roles roles_from(const RunConfig& cfg) {
    Roles r;
    r.tune = cfg.get_string("roles.tune", "surrogate-tune");
    r.target = cfg.get_string("roles.target", "target-train");
    r.eval = cfg.get_string("roles.eval", r.tune);
    return r;
}

void require_path(const RunConfig& cfg, const std::string& key) {
    std::string p = cfg.get_string(key);
    if (!fs::exists(p))
        throw ValidationError(
            "config key '" + key + "': path does not exist: " + p, key);
}

// Re-raises contract violations from domain factories as validation errors
// naming the key group, so bad config values fail before any compute.
template <typename Fn>
auto validated(const char* key, Fn&& fn) {
    try {
        return fn();
    } catch (const ValidationError&) {
        throw;
    } catch (const Error& e) {
        throw ValidationError(
            std::string("config key '") + key + "': " + e.what(), key);
    }
}

std::uint64_t seed_from(const RunConfig& cfg) { return cfg.get_u64("seed", 0); }

TrainSchedule schedule_from(const RunConfig& cfg, std::uint64_t seed) {
    return validated("train.*", [&] {
        OptimizerKind opt =
            optimizer_kind_from_name(cfg.get_string("train.optimizer", "sgd"));
        return TrainSchedule::make(
            opt, cfg.get_double("train.lr", 0.01),
            cfg.get_double("train.lr_min", 0.0),
            cfg.get_size("train.batch", 32), cfg.get_size("train.epochs"),
            cfg.get_bool("train.anneal", true), seed);
    });
}

MarginConfig margin_from(const RunConfig& cfg) {
    return validated("margin.*", [&] {
        return MarginConfig::make(cfg.get_double("margin.m", 0.15),
                                  cfg.get_double("margin.s", 30.0),
                                  cfg.get_double("margin.eps", 1e-7));
    });
}

AttackBudget budget_from(const RunConfig& cfg) {
    return validated("budget.*", [&] {
        return AttackBudget::make(
            cfg.get_double("budget.epsilon"),
            bound_mode_from_name(cfg.get_string("budget.mode", "tanh-scale")));
    });
}

PgdConfig pgd_from(const RunConfig& cfg, double epsilon, bool default_random,
                   std::uint64_t seed) {
    return validated("pgd.*", [&] {
        double step = cfg.get_double("pgd.step", epsilon / 4.0);
        return PgdConfig::make(epsilon, cfg.get_size("pgd.steps", 10), step,
                               cfg.get_bool("pgd.random_start", default_random),
                               cfg.get_u64("pgd.seed", seed));
    });
}

EncoderSpec encoder_from(const RunConfig& cfg, const ImageShape& input) {
    return validated("encoder.*", [&] {
        EncoderKind kind = encoder_kind_from_name(
            cfg.get_string("encoder.kind", "compact-conv"));
        std::optional<std::string> plugin;
        if (kind == EncoderKind::plugin) plugin = cfg.get_string("encoder.plugin");
        return EncoderSpec::make(kind, cfg.get_size("encoder.dim", 64), input,
                                 plugin);
    });
}

std::vector<std::size_t> grid_from(const RunConfig& cfg) {
    std::string text = cfg.get_string("ablate.grid", "10,25,50,75,100");
    std::vector<std::size_t> grid;
    std::istringstream in(text);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        try {
            std::size_t n = 0;
            long long v = std::stoll(tok, &n);
            if (n != tok.size() || v < 1 || v > 100)
                throw DomainError("bad percentage");
            grid.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw ValidationError("config key 'ablate.grid': '" + tok +
                                      "' is not a percentage in [1, 100]",
                                  "ablate.grid");
        }
    }
    if (grid.empty())
        throw ValidationError("config key 'ablate.grid': empty grid",
                              "ablate.grid");
    return grid;
}

// ------------------------------------------------------------- run context

struct RunContext {
    const RunConfig& cfg;
    fs::path run_dir;
    RunManifest manifest;

    void artifact(const std::string& rel) {
        manifest.artifacts.push_back(rel);
    }
    std::string file(const std::string& rel) const {
        return (run_dir / rel).string();
    }
};

DatasetManifest dataset_from(const RunContext& ctx) {
    return DatasetManifest::read(ctx.cfg.get_string("dataset.manifest"));
}

std::optional<std::map<std::string, std::string>> assignment_from(
    const RunContext& ctx) {
    if (!ctx.cfg.has("dataset.assignment")) return std::nullopt;
    return read_assignment(ctx.cfg.get_string("dataset.assignment"));
}

InMemoryDataset role_data(
    const DatasetManifest& manifest,
    const std::optional<std::map<std::string, std::string>>& assignment,
    const std::string& role) {
    if (assignment) return InMemoryDataset::load(manifest, *assignment, role);
    return InMemoryDataset::load(manifest);
}

LabelVector dataset_labels(const InMemoryDataset& data) {
    return LabelVector::make(data.labels(), data.n_classes());
}

// Per-batch attacker closures used by eval and ablate.
AttackerFn generator_attacker(std::shared_ptr<GeneratorModel> g,
                              AttackBudget budget) {
    return [g, budget](const ImageBatch& batch) {
        return craft_adversarial(*g, batch, budget).adversarial;
    };
}

AttackerFn pgd_attacker(std::shared_ptr<Classifier> model,
                        std::map<std::string, std::size_t> label_of,
                        std::size_t n_classes, PgdConfig cfg) {
    return [model, label_of = std::move(label_of), n_classes,
            cfg](const ImageBatch& batch) {
        std::vector<std::size_t> ls;
        ls.reserve(batch.ids.size());
        for (const std::string& id : batch.ids) ls.push_back(label_of.at(id));
        return pgd_attack(*model, batch, LabelVector::make(ls, n_classes), cfg)
            .adversarial;
    };
}

std::string safe_filename(const std::string& id) {
    std::string out;
    for (char c : id)
        out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' ||
                c == '_' || c == '-')
                   ? c
                   : '_';
    return out;
}

// ------------------------------------------------------------- validation

void validate_config(const RunConfig& cfg, Command cmd) {
    require_path(cfg, "dataset.manifest");
    if (cfg.has("dataset.assignment")) require_path(cfg, "dataset.assignment");
    seed_from(cfg);  // parses

    switch (cmd) {
        case Command::finetune: {
            DatasetManifest m =
                DatasetManifest::read(cfg.get_string("dataset.manifest"));
            encoder_from(cfg, m.image_size());
            if (cfg.has("encoder.plugin")) require_path(cfg, "encoder.plugin");
            margin_from(cfg);
            schedule_from(cfg, 0);
            break;
        }
        case Command::train_gen:
            require_path(cfg, "surrogate.checkpoint");
            budget_from(cfg);
            schedule_from(cfg, 0);
            validated("gen.*", [&] {
                cfg.get_size("gen.depth", 3);
                cfg.get_size("gen.base", 32);
                return 0;
            });
            break;
        case Command::attack:
            require_path(cfg, "generator.checkpoint");
            budget_from(cfg);
            break;
        case Command::eval: {
            require_path(cfg, "target.checkpoint");
            AttackBudget b = budget_from(cfg);
            std::string kind = cfg.get_string("attacker.kind", "generator");
            if (kind == "generator") {
                require_path(cfg, "generator.checkpoint");
            } else if (kind == "pgd-surrogate") {
                require_path(cfg, "surrogate.checkpoint");
                pgd_from(cfg, b.epsilon, false, 0);
            } else if (kind == "pgd-target") {
                pgd_from(cfg, b.epsilon, false, 0);
            } else if (kind != "identity") {
                throw ValidationError(
                    "config key 'attacker.kind': unknown attacker '" + kind +
                        "' (expected generator, pgd-surrogate, pgd-target, or "
                        "identity)",
                    "attacker.kind");
            }
            break;
        }
        case Command::adv_train:
            schedule_from(cfg, 0);
            if (cfg.get_bool("pgd.enabled", true))
                pgd_from(cfg, cfg.get_double("pgd.epsilon", 8.0 / 255.0), true,
                         0);
            break;
        case Command::audit:
        case Command::export_emb:
            require_path(cfg, "surrogate.checkpoint");
            break;
        case Command::ablate_proportion: {
            if (!cfg.has("dataset.assignment"))
                throw ValidationError(
                    "missing required config key 'dataset.assignment' "
                    "(the proportion ablation needs role splits)",
                    "dataset.assignment");
            require_path(cfg, "target.checkpoint");
            DatasetManifest m =
                DatasetManifest::read(cfg.get_string("dataset.manifest"));
            encoder_from(cfg, m.image_size());
            margin_from(cfg);
            schedule_from(cfg, 0);
            validated("gentrain.*", [&] {
                cfg.get_size("gentrain.epochs");
                return 0;
            });
            budget_from(cfg);
            grid_from(cfg);
            break;
        }
    }
}

// ------------------------------------------------------------- commands

void do_finetune(RunContext& ctx) {
    DatasetManifest manifest = dataset_from(ctx);
    auto assignment = assignment_from(ctx);
    Roles roles = roles_from(ctx.cfg);
    std::uint64_t seed = seed_from(ctx.cfg);

    InMemoryDataset data = role_data(manifest, assignment, roles.tune);
    EncoderSpec espec = encoder_from(ctx.cfg, manifest.image_size());
    SurrogateModel model = build_surrogate(espec, manifest.n_classes(), seed);
    TrainSchedule sched = schedule_from(ctx.cfg, seed);
    MarginConfig mcfg = margin_from(ctx.cfg);

    std::optional<SplitRegistry> registry;
    if (assignment)
        registry = build_split_registry(manifest, *assignment);
    TrainingTrace trace = finetune_surrogate(
        model, data, sched, mcfg, registry ? &*registry : nullptr,
        roles.target);
    ctx.manifest.disjointness[roles.tune + " vs " + roles.target] =
        assignment ? "pass" : "not-checked";

    persist_surrogate(model, ctx.file("surrogate.ckpt"));
    ctx.artifact("surrogate.ckpt");
    write_trace_csv(trace, ctx.file("finetune_trace.csv"));
    ctx.artifact("finetune_trace.csv");
    log::info("fine-tuned surrogate over %zu images, final min margin %s",
              data.size(),
              trace.records.empty()
                  ? fmt12(trace.initial_min_margin).c_str()
                  : fmt12(trace.records.back().min_margin).c_str());
}

void do_train_gen(RunContext& ctx) {
    DatasetManifest manifest = dataset_from(ctx);
    auto assignment = assignment_from(ctx);
    Roles roles = roles_from(ctx.cfg);
    std::uint64_t seed = seed_from(ctx.cfg);

    SurrogateModel surrogate =
        restore_surrogate(ctx.cfg.get_string("surrogate.checkpoint"));
    InMemoryDataset data = role_data(manifest, assignment, roles.tune);
    if (assignment) {
        SplitRegistry registry = build_split_registry(manifest, *assignment);
        std::vector<std::string> shared =
            verify_disjointness(registry, roles.tune, roles.target);
        if (!shared.empty()) {
            std::string msg = "generator training data overlaps role '" +
                              roles.target + "' by content:";
            for (const std::string& h : shared) msg += " " + h;
            throw DisjointnessError(msg, shared);
        }
    }
    ctx.manifest.disjointness[roles.tune + " vs " + roles.target] =
        assignment ? "pass" : "not-checked";

    GeneratorSpec gspec = GeneratorSpec::make(
        manifest.image_size(), ctx.cfg.get_size("gen.depth", 3),
        ctx.cfg.get_size("gen.base", 32));
    GeneratorModel g = build_generator(gspec, seed);
    TrainSchedule sched = schedule_from(ctx.cfg, seed);
    AttackBudget budget = budget_from(ctx.cfg);
    TrainingTrace trace = train_generator(g, surrogate, data, sched, budget);

    persist_generator(g, ctx.file("generator.ckpt"));
    ctx.artifact("generator.ckpt");
    write_trace_csv(trace, ctx.file("train_gen_trace.csv"));
    ctx.artifact("train_gen_trace.csv");
    log::info("trained generator over %zu images, final fooling rate %s",
              data.size(),
              trace.records.empty() ? "na"
                                    : fmt12(trace.records.back().acc).c_str());
}

void do_attack(RunContext& ctx) {
    DatasetManifest manifest = dataset_from(ctx);
    auto assignment = assignment_from(ctx);
    Roles roles = roles_from(ctx.cfg);

    GeneratorModel g =
        restore_generator(ctx.cfg.get_string("generator.checkpoint"));
    InMemoryDataset data = role_data(manifest, assignment, roles.eval);
    AttackBudget budget = budget_from(ctx.cfg);
    std::size_t batch_size = ctx.cfg.get_size("attack.batch", 32);

    fs::create_directories(ctx.run_dir / "adv");
    std::ostringstream stats;
    stats << "id,linf_delta\n";
    const char* ext = manifest.image_size().channels == 3 ? "ppm" : "pgm";
    std::size_t index = 0;
    for (const Batch& b : data.batches(batch_size, std::nullopt)) {
        AdversarialBatch adv = craft_adversarial(g, b.images, budget);
        std::vector<std::string> bad = budget_violations(
            b.images, adv.adversarial, budget.epsilon,
            std::numeric_limits<double>::epsilon());
        if (!bad.empty()) {
            std::string msg = "crafted samples escape the perturbation budget:";
            for (const std::string& id : bad) msg += " " + id;
            throw BudgetError(msg, bad);
        }
        const Tensor& px = adv.adversarial.pixels;
        const std::size_t sample_sz = px.size() / px.dim(0);
        for (std::size_t i = 0; i < px.dim(0); ++i, ++index) {
            double linf = 0.0;
            for (std::size_t j = 0; j < sample_sz; ++j)
                linf = std::max(linf,
                                std::abs(px[i * sample_sz + j] -
                                         b.images.pixels[i * sample_sz + j]));
            stats << adv.adversarial.ids[i] << ',' << fmt12(linf) << '\n';

            Tensor chw({px.dim(1), px.dim(2), px.dim(3)});
            for (std::size_t j = 0; j < sample_sz; ++j)
                chw[j] = px[i * sample_sz + j];
            char name[128];
            std::snprintf(name, sizeof(name), "adv/%04zu_%s.%s", index,
                          safe_filename(adv.adversarial.ids[i]).c_str(), ext);
            save_image(ctx.file(name), chw);
        }
    }
    ctx.artifact("adv");
    write_file_atomic(ctx.file("crafted_stats.csv"), stats.str());
    ctx.artifact("crafted_stats.csv");
    log::info("crafted %zu adversarial images within epsilon %s", index,
              fmt12(budget.epsilon).c_str());
}

void do_eval(RunContext& ctx) {
    DatasetManifest manifest = dataset_from(ctx);
    auto assignment = assignment_from(ctx);
    Roles roles = roles_from(ctx.cfg);
    std::uint64_t seed = seed_from(ctx.cfg);

    TargetModel target = restore_target(ctx.cfg.get_string("target.checkpoint"));
    InMemoryDataset data = role_data(manifest, assignment, roles.eval);
    AttackBudget budget = budget_from(ctx.cfg);
    std::string kind = ctx.cfg.get_string("attacker.kind", "generator");

    AttackerFn attacker;
    if (kind == "generator") {
        auto g = std::make_shared<GeneratorModel>(
            restore_generator(ctx.cfg.get_string("generator.checkpoint")));
        attacker = generator_attacker(g, budget);
    } else if (kind == "pgd-surrogate" || kind == "pgd-target") {
        std::map<std::string, std::size_t> label_of;
        for (std::size_t i = 0; i < data.size(); ++i)
            label_of[data.ids()[i]] = data.labels()[i];
        PgdConfig cfg = pgd_from(ctx.cfg, budget.epsilon, false, seed);
        std::shared_ptr<Classifier> model;
        if (kind == "pgd-surrogate")
            model = std::make_shared<SurrogateModel>(restore_surrogate(
                ctx.cfg.get_string("surrogate.checkpoint")));
        else
            model = std::make_shared<TargetModel>(
                restore_target(ctx.cfg.get_string("target.checkpoint")));
        attacker = pgd_attacker(model, std::move(label_of), data.n_classes(),
                                cfg);
    } else {
        attacker = [](const ImageBatch& b) { return b; };
    }

    EvalJob job;
    job.dataset = manifest.name();
    job.target_id = ctx.cfg.get_string("target.id", "target");
    job.target_provenance = target_provenance_name(target.meta().provenance);
    job.attacker_id = kind;
    job.seed = seed;
    job.batch_size = ctx.cfg.get_size("eval.batch", 32);

    EvaluationReport report = evaluate(target, attacker, data, budget, job);
    render_report({report}, ctx.file("report.txt"));
    ctx.artifact("report.txt");
    ctx.artifact("report.txt.json");
    log::info("clean %.2f%%  adversarial %.2f%%  asr %.2f",
              report.clean_accuracy, report.adversarial_accuracy, report.asr);
}

void do_adv_train(RunContext& ctx) {
    DatasetManifest manifest = dataset_from(ctx);
    auto assignment = assignment_from(ctx);
    Roles roles = roles_from(ctx.cfg);
    std::uint64_t seed = seed_from(ctx.cfg);

    InMemoryDataset data = role_data(manifest, assignment, roles.target);
    TrainSchedule sched = schedule_from(ctx.cfg, seed);
    TrainingTrace trace;
    TargetModel model = [&] {
        if (ctx.cfg.get_bool("pgd.enabled", true)) {
            PgdConfig pgd = pgd_from(
                ctx.cfg, ctx.cfg.get_double("pgd.epsilon", 8.0 / 255.0), true,
                seed);
            return adversarial_train(data, pgd, sched, &trace);
        }
        return train_target(data, sched, &trace);
    }();

    persist_target(model, ctx.file("target.ckpt"));
    ctx.artifact("target.ckpt");
    write_trace_csv(trace, ctx.file("adv_train_trace.csv"));
    ctx.artifact("adv_train_trace.csv");
    log::info("trained %s target over %zu images",
              target_provenance_name(model.meta().provenance), data.size());
}

void do_audit(RunContext& ctx) {
    DatasetManifest manifest = dataset_from(ctx);
    auto assignment = assignment_from(ctx);
    Roles roles = roles_from(ctx.cfg);
    std::string role = ctx.cfg.get_string("roles.audit", roles.tune);

    SurrogateModel model =
        restore_surrogate(ctx.cfg.get_string("surrogate.checkpoint"));
    InMemoryDataset data = role_data(manifest, assignment, role);
    EmbeddingBatch embs = model.unit_embeddings(data.pixels());
    MarginAudit audit =
        class_margin_audit(embs, dataset_labels(data), model.head().anchors());

    std::ostringstream csv;
    csv << "class,count,mean_own_similarity,max_other_similarity,min_margin,"
           "mean_margin\n";
    for (std::size_t c = 0; c < audit.per_class.size(); ++c) {
        const ClassMarginStats& s = audit.per_class[c];
        if (s.present)
            csv << c << ',' << s.count << ',' << fmt12(s.mean_own_similarity)
                << ',' << fmt12(s.max_other_similarity) << ','
                << fmt12(s.min_margin) << ',' << fmt12(s.mean_margin) << '\n';
        else
            csv << c << ",0,na,na,na,na\n";
    }
    write_file_atomic(ctx.file("margin_audit.csv"), csv.str());
    ctx.artifact("margin_audit.csv");

    nlohmann::json j;
    j["overall_min_margin"] = audit.overall_min_margin;
    j["per_class"] = nlohmann::json::array();
    for (std::size_t c = 0; c < audit.per_class.size(); ++c) {
        const ClassMarginStats& s = audit.per_class[c];
        j["per_class"].push_back({{"class", c},
                                  {"present", s.present},
                                  {"count", s.count},
                                  {"min_margin", s.min_margin},
                                  {"mean_margin", s.mean_margin}});
    }
    write_file_atomic(ctx.file("margin_audit.json"), j.dump(2) + "\n");
    ctx.artifact("margin_audit.json");
    log::info("minimum inter-class margin %s over %zu samples",
              fmt12(audit.overall_min_margin).c_str(), data.size());
}

void do_export_emb(RunContext& ctx) {
    DatasetManifest manifest = dataset_from(ctx);
    auto assignment = assignment_from(ctx);
    Roles roles = roles_from(ctx.cfg);
    std::string role = ctx.cfg.get_string("roles.export", roles.tune);

    SurrogateModel model =
        restore_surrogate(ctx.cfg.get_string("surrogate.checkpoint"));
    InMemoryDataset data = role_data(manifest, assignment, role);
    EmbeddingBatch embs = model.unit_embeddings(data.pixels());
    export_embeddings(embs, dataset_labels(data), data.ids(),
                      ctx.file("embeddings.csv"));
    ctx.artifact("embeddings.csv");
    log::info("exported %zu embeddings of dimension %zu", embs.count(),
              embs.dim());
}

void do_ablate(RunContext& ctx) {
    DatasetManifest manifest = dataset_from(ctx);
    auto assignment_opt = assignment_from(ctx);
    const std::map<std::string, std::string>& assignment = *assignment_opt;
    Roles roles = roles_from(ctx.cfg);
    std::uint64_t seed = seed_from(ctx.cfg);

    TargetModel target = restore_target(ctx.cfg.get_string("target.checkpoint"));
    std::string target_id = ctx.cfg.get_string("target.id", "target");
    AttackBudget budget = budget_from(ctx.cfg);
    EncoderSpec espec = encoder_from(ctx.cfg, manifest.image_size());
    MarginConfig mcfg = margin_from(ctx.cfg);
    TrainSchedule tune_sched = schedule_from(ctx.cfg, seed);
    TrainSchedule gen_sched = validated("gentrain.*", [&] {
        OptimizerKind opt = optimizer_kind_from_name(
            ctx.cfg.get_string("gentrain.optimizer", "adamw"));
        return TrainSchedule::make(
            opt, ctx.cfg.get_double("gentrain.lr", 2e-3),
            ctx.cfg.get_double("gentrain.lr_min", 0.0),
            ctx.cfg.get_size("gentrain.batch", 32),
            ctx.cfg.get_size("gentrain.epochs"),
            ctx.cfg.get_bool("gentrain.anneal", true), seed);
    });
    GeneratorSpec gspec = GeneratorSpec::make(
        manifest.image_size(), ctx.cfg.get_size("gen.depth", 3),
        ctx.cfg.get_size("gen.base", 32));
    std::vector<std::size_t> grid = grid_from(ctx.cfg);

    // Tuning-role items per class, in manifest order.
    std::map<std::size_t, std::vector<const ManifestItem*>> tune_by_class;
    for (const ManifestItem& item : manifest.items()) {
        auto it = assignment.find(item.id);
        if (it != assignment.end() && it->second == roles.tune)
            tune_by_class[item.label].push_back(&item);
    }
    if (tune_by_class.empty())
        throw DomainError("no items carry the tuning role '" + roles.tune +
                          "'");

    InMemoryDataset eval_data = role_data(manifest, assignment_opt, roles.eval);

    std::ostringstream table;
    table << "proportion,n_tune,clean,adv,asr\n";
    for (std::size_t p : grid) {
        // Keep the first ceil-rounded share of every class, at least one.
        std::map<std::string, std::string> sub = assignment;
        std::size_t kept = 0;
        for (const auto& [label, members] : tune_by_class) {
            std::size_t k = static_cast<std::size_t>(std::llround(
                static_cast<double>(p) / 100.0 *
                static_cast<double>(members.size())));
            k = std::max<std::size_t>(1, std::min(k, members.size()));
            kept += k;
            for (std::size_t i = k; i < members.size(); ++i)
                sub.erase(members[i]->id);
        }

        char leg[16];
        std::snprintf(leg, sizeof(leg), "p%03zu", p);
        fs::create_directories(ctx.run_dir / leg);

        SplitRegistry registry = build_split_registry(manifest, sub);
        InMemoryDataset tune_data =
            InMemoryDataset::load(manifest, sub, roles.tune);
        SurrogateModel surrogate =
            build_surrogate(espec, manifest.n_classes(), seed);
        TrainingTrace tune_trace = finetune_surrogate(
            surrogate, tune_data, tune_sched, mcfg, &registry, roles.target);
        ctx.manifest.disjointness[std::string(leg) + " " + roles.tune +
                                  " vs " + roles.target] = "pass";

        GeneratorModel g = build_generator(gspec, seed);
        TrainingTrace gen_trace =
            train_generator(g, surrogate, tune_data, gen_sched, budget);

        std::string prefix = std::string(leg) + "/";
        persist_surrogate(surrogate, ctx.file(prefix + "surrogate.ckpt"));
        ctx.artifact(prefix + "surrogate.ckpt");
        persist_generator(g, ctx.file(prefix + "generator.ckpt"));
        ctx.artifact(prefix + "generator.ckpt");
        write_trace_csv(tune_trace, ctx.file(prefix + "finetune_trace.csv"));
        ctx.artifact(prefix + "finetune_trace.csv");
        write_trace_csv(gen_trace, ctx.file(prefix + "train_gen_trace.csv"));
        ctx.artifact(prefix + "train_gen_trace.csv");

        auto g_shared = std::make_shared<GeneratorModel>(std::move(g));
        EvalJob job;
        job.dataset = manifest.name();
        job.target_id = target_id;
        job.target_provenance =
            target_provenance_name(target.meta().provenance);
        job.attacker_id = "generator";
        job.seed = seed;
        job.batch_size = ctx.cfg.get_size("eval.batch", 32);
        EvaluationReport report =
            evaluate(target, generator_attacker(g_shared, budget), eval_data,
                     budget, job);
        render_report({report}, ctx.file(prefix + "report.txt"));
        ctx.artifact(prefix + "report.txt");
        ctx.artifact(prefix + "report.txt.json");

        table << p << ',' << kept << ',' << fmt12(report.clean_accuracy)
              << ',' << fmt12(report.adversarial_accuracy) << ','
              << fmt12(report.asr) << '\n';
        log::info("proportion %zu%%: %zu tuning images, asr %.2f", p, kept,
                  report.asr);
    }
    write_file_atomic(ctx.file("ablation.csv"), table.str());
    ctx.artifact("ablation.csv");
}

void dispatch(RunContext& ctx, Command cmd) {
    switch (cmd) {
        case Command::finetune: do_finetune(ctx); return;
        case Command::train_gen: do_train_gen(ctx); return;
        case Command::attack: do_attack(ctx); return;
        case Command::eval: do_eval(ctx); return;
        case Command::adv_train: do_adv_train(ctx); return;
        case Command::audit: do_audit(ctx); return;
        case Command::export_emb: do_export_emb(ctx); return;
        case Command::ablate_proportion: do_ablate(ctx); return;
    }
    throw DomainError("unhandled command");
}

}  // namespace

// ------------------------------------------------------------- manifests

const char* command_name(Command c) {
    for (const auto& [cmd, name] : kCommandNames)
        if (cmd == c) return name;
    throw DomainError("unknown command enum value");
}

Command command_from_name(const std::string& name) {
    for (const auto& [cmd, cname] : kCommandNames)
        if (name == cname) return cmd;
    throw ValidationError("unknown command '" + name + "'");
}

void RunManifest::write(const std::string& path) const {
    if (status != "ok" && status != "failed" && status != "dry")
        throw DomainError("run manifest status must be ok, failed, or dry");
    fs::path base = fs::path(path).parent_path();
    for (const std::string& rel : artifacts)
        if (!fs::exists(base / rel))
            throw PersistenceError("run manifest lists a missing artifact: " +
                                   rel);
    nlohmann::json j;
    j["run_id"] = run_id;
    j["command"] = command;
    j["config_hash"] = config_hash;
    j["status"] = status;
    j["started_at"] = started_at;
    j["finished_at"] = finished_at;
    j["artifacts"] = artifacts;
    j["disjointness"] = disjointness;
    j["tool_version"] = tool_version;
    j["error"] = error;
    write_file_atomic(path, j.dump(2) + "\n");
}

RunManifest RunManifest::read(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw PersistenceError("cannot open run manifest " + path);
    try {
        nlohmann::json j = nlohmann::json::parse(in);
        RunManifest m;
        m.run_id = j.at("run_id").get<std::string>();
        m.command = j.at("command").get<std::string>();
        m.config_hash = j.at("config_hash").get<std::string>();
        m.status = j.at("status").get<std::string>();
        m.started_at = j.at("started_at").get<std::string>();
        m.finished_at = j.at("finished_at").get<std::string>();
        m.artifacts = j.at("artifacts").get<std::vector<std::string>>();
        m.disjointness =
            j.at("disjointness").get<std::map<std::string, std::string>>();
        m.tool_version = j.at("tool_version").get<std::string>();
        m.error = j.at("error").get<std::string>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw PersistenceError("malformed run manifest " + path + ": " +
                               e.what());
    }
}

// ------------------------------------------------------------- pipeline

RunManifest run_pipeline(const RunConfig& cfg, Command cmd, bool dry_run) {
    validate_config(cfg, cmd);

    std::string root = cfg.get_string("out.dir", "");
    if (root.empty()) {
        const char* env = std::getenv(kOutEnvVar);
        root = (env != nullptr && env[0] != '\0') ? env : "runs";
    }
    std::string hash = cfg.config_hash();
    std::string run_id = cfg.get_string(
        "run.id", std::string(command_name(cmd)) + "-" + hash.substr(0, 12) +
                      "-s" + std::to_string(seed_from(cfg)));
    fs::path run_dir = fs::path(root) / run_id;
    if (fs::exists(run_dir))
        throw ValidationError("run directory already exists (runs are never "
                              "overwritten): " +
                              run_dir.string());

    RunContext ctx{cfg, run_dir, {}};
    ctx.manifest.run_id = run_id;
    ctx.manifest.command = command_name(cmd);
    ctx.manifest.config_hash = hash;
    ctx.manifest.tool_version = kToolVersion;
    ctx.manifest.started_at = iso_utc_now();

    std::string manifest_path = (run_dir / "manifest.json").string();
    if (dry_run) {
        log::info("dry run: %s -> %s", command_name(cmd),
                  run_dir.string().c_str());
        log::info("config hash %s, seed %llu", hash.c_str(),
                  static_cast<unsigned long long>(seed_from(cfg)));
        ctx.manifest.status = "dry";
        ctx.manifest.finished_at = iso_utc_now();
        fs::create_directories(run_dir);
        ctx.manifest.write(manifest_path);
        return ctx.manifest;
    }

    fs::create_directories(run_dir);
    try {
        dispatch(ctx, cmd);
    } catch (const std::exception& e) {
        ctx.manifest.status = "failed";
        ctx.manifest.error = e.what();
        ctx.manifest.finished_at = iso_utc_now();
        // Keep only artifacts that actually landed before the failure.
        std::vector<std::string> kept;
        for (const std::string& rel : ctx.manifest.artifacts)
            if (fs::exists(run_dir / rel)) kept.push_back(rel);
        ctx.manifest.artifacts = std::move(kept);
        ctx.manifest.write(manifest_path);
        throw;
    }
    ctx.manifest.status = "ok";
    ctx.manifest.finished_at = iso_utc_now();
    ctx.manifest.write(manifest_path);
    log::info("run %s complete, manifest at %s", run_id.c_str(),
              manifest_path.c_str());
    return ctx.manifest;
}

// ------------------------------------------------------------- CLI surface

namespace {

void usage() {
    std::fprintf(
        stderr,
        "usage: noboxlab <command> [--config FILE]... [--set KEY=VALUE]...\n"
        "                [--seed N] [--dry-run]\n"
        "commands: finetune train-gen attack eval adv-train audit export-emb\n"
        "          ablate-proportion\n"
        "exit codes: 0 ok, 2 validation error, 3 disjointness refusal,\n"
        "            4 runtime failure\n");
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    try {
        if (argc < 2) {
            usage();
            return 2;
        }
        std::string first = argv[1];
        if (first == "--help" || first == "-h") {
            usage();
            return 0;
        }
        Command cmd = command_from_name(first);

        RunConfig cfg;
        bool dry_run = false;
        for (int i = 2; i < argc; ++i) {
            std::string arg = argv[i];
            auto next = [&](const char* what) -> std::string {
                if (i + 1 >= argc)
                    throw ValidationError(std::string(what) +
                                          " needs an argument");
                return argv[++i];
            };
            if (arg == "--config") {
                cfg.overlay_file(next("--config"));
            } else if (arg == "--set") {
                std::string kv = next("--set");
                std::size_t eq = kv.find('=');
                if (eq == std::string::npos)
                    throw ValidationError("--set expects KEY=VALUE, got '" +
                                          kv + "'");
                cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
            } else if (arg == "--seed") {
                cfg.set("seed", next("--seed"));
            } else if (arg == "--dry-run") {
                dry_run = true;
            } else {
                throw ValidationError("unknown argument '" + arg + "'");
            }
        }
        run_pipeline(cfg, cmd, dry_run);
        return 0;
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return 2;
    } catch (const DisjointnessError& e) {
        std::fprintf(stderr, "disjointness refusal: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    }
}

}  // namespace noboxlab
