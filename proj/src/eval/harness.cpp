#include "noboxlab/eval/harness.hpp"

#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <utility>

#include <nlohmann/json.hpp>

#include "noboxlab/core/errors.hpp"
#include "noboxlab/nn/loss.hpp"

namespace noboxlab {

namespace {

// One representable unit at pixel scale: reconstructing a perturbation as
// (x + d) - x may round a single ulp past |d|.
constexpr double kBudgetSlack = std::numeric_limits<double>::epsilon();

void require_percent(double v, const char* what) {
    if (!(v >= 0.0 && v <= 100.0))
        throw DomainError(std::string(what) + " must lie in [0, 100], got " +
                          std::to_string(v));
}

std::string two_decimals(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

}  // namespace

EvaluationReport EvaluationReport::make(
    std::string dataset, std::string target_id, std::string target_provenance,
    std::string attacker_id, double clean_accuracy,
    double adversarial_accuracy, double asr, std::size_t n_samples,
    double epsilon, std::uint64_t seed) {
    require_percent(clean_accuracy, "clean accuracy");
    require_percent(adversarial_accuracy, "adversarial accuracy");
    if (asr != clean_accuracy - adversarial_accuracy)
        throw DomainError(
            "attack success rate must equal clean minus adversarial accuracy "
            "exactly");
    EvaluationReport r;
    r.dataset = std::move(dataset);
    r.target_id = std::move(target_id);
    r.target_provenance = std::move(target_provenance);
    r.attacker_id = std::move(attacker_id);
    r.clean_accuracy = clean_accuracy;
    r.adversarial_accuracy = adversarial_accuracy;
    r.asr = asr;
    r.n_samples = n_samples;
    r.epsilon = epsilon;
    r.seed = seed;
    return r;
}

LabelVector classify(Classifier& model, const ImageBatch& batch) {
    const ImageShape& want = model.input_size();
    if (batch.pixels.ndim() != 4 || batch.pixels.dim(1) != want.channels ||
        batch.pixels.dim(2) != want.height || batch.pixels.dim(3) != want.width)
        throw ShapeError("classification batch does not match the model input size");
    Tensor z = model.logits(batch.pixels);
    return LabelVector::make(argmax_rows(z), model.n_classes());
}

double attack_success_rate(double clean_acc, double adv_acc) {
    require_percent(clean_acc, "clean accuracy");
    require_percent(adv_acc, "adversarial accuracy");
    return clean_acc - adv_acc;
}

EvaluationReport evaluate(Classifier& target, const AttackerFn& attacker,
                          const InMemoryDataset& data,
                          const AttackBudget& budget, const EvalJob& job) {
    if (data.size() == 0) throw DomainError("evaluation dataset is empty");
    if (job.batch_size == 0)
        throw DomainError("evaluation batch size must be at least 1");

    std::size_t clean_correct = 0;
    std::size_t adv_correct = 0;
    std::vector<std::string> escaped;
    for (const Batch& b : data.batches(job.batch_size, std::nullopt)) {
        LabelVector clean_pred = classify(target, b.images);
        ImageBatch crafted = attacker(b.images);
        std::vector<std::string> bad =
            budget_violations(b.images, crafted, budget.epsilon, kBudgetSlack);
        escaped.insert(escaped.end(), bad.begin(), bad.end());
        LabelVector adv_pred = classify(target, crafted);
        for (std::size_t i = 0; i < b.labels.labels.size(); ++i) {
            if (clean_pred.labels[i] == b.labels.labels[i]) ++clean_correct;
            if (adv_pred.labels[i] == b.labels.labels[i]) ++adv_correct;
        }
    }
    if (!escaped.empty()) {
        std::string msg = "crafted samples escape the perturbation budget:";
        for (const std::string& id : escaped) msg += " " + id;
        throw BudgetError(msg, escaped);
    }

    const double total = static_cast<double>(data.size());
    double clean_acc = 100.0 * static_cast<double>(clean_correct) / total;
    double adv_acc = 100.0 * static_cast<double>(adv_correct) / total;
    return EvaluationReport::make(job.dataset, job.target_id,
                                  job.target_provenance, job.attacker_id,
                                  clean_acc, adv_acc,
                                  attack_success_rate(clean_acc, adv_acc),
                                  data.size(), budget.epsilon, job.seed);
}

void render_report(const std::vector<EvaluationReport>& reports,
                   const std::string& path) {
    if (reports.empty())
        throw DomainError("cannot render an empty report list");

    // Group rows by (target, provenance) and columns by dataset, both in
    // first-appearance order.
    struct Row {
        std::string target;
        std::string provenance;
        std::map<std::string, const EvaluationReport*> cells;  // dataset -> report
    };
    std::vector<Row> rows;
    std::vector<std::string> datasets;
    for (const EvaluationReport& r : reports) {
        Row* row = nullptr;
        for (Row& existing : rows)
            if (existing.target == r.target_id &&
                existing.provenance == r.target_provenance)
                row = &existing;
        if (row == nullptr) {
            rows.push_back({r.target_id, r.target_provenance, {}});
            row = &rows.back();
        }
        if (row->cells.count(r.dataset))
            throw DomainError("duplicate report for target '" + r.target_id +
                              "' on dataset '" + r.dataset + "'");
        row->cells[r.dataset] = &r;
        bool seen = false;
        for (const std::string& d : datasets) seen = seen || d == r.dataset;
        if (!seen) datasets.push_back(r.dataset);
    }

    std::vector<double> averages;
    for (const Row& row : rows) {
        double sum = 0.0;
        for (const auto& [dataset, rep] : row.cells) sum += rep->asr;
        averages.push_back(sum / static_cast<double>(row.cells.size()));
    }

    // Text table.
    std::vector<std::vector<std::string>> grid;
    std::vector<std::string> header = {"target", "provenance"};
    for (const std::string& d : datasets) header.push_back(d);
    header.push_back("Average");
    grid.push_back(header);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::vector<std::string> line = {rows[i].target, rows[i].provenance};
        for (const std::string& d : datasets) {
            auto it = rows[i].cells.find(d);
            line.push_back(it == rows[i].cells.end() ? "na"
                                                     : two_decimals(it->second->asr));
        }
        line.push_back(two_decimals(averages[i]));
        grid.push_back(line);
    }
    std::vector<std::size_t> widths(header.size(), 0);
    for (const auto& line : grid)
        for (std::size_t c = 0; c < line.size(); ++c)
            widths[c] = std::max(widths[c], line[c].size());
    std::ofstream text(path);
    if (!text) throw PersistenceError("cannot open report file " + path);
    for (const auto& line : grid) {
        for (std::size_t c = 0; c < line.size(); ++c) {
            if (c > 0) text << "  ";
            text << line[c]
                 << std::string(widths[c] - line[c].size(), ' ');
        }
        text << "\n";
    }
    text.close();
    if (!text) throw PersistenceError("failed writing report file " + path);

    // JSON twin: unrounded values.
    nlohmann::json out = nlohmann::json::array();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        nlohmann::json entry;
        entry["target"] = rows[i].target;
        entry["provenance"] = rows[i].provenance;
        entry["rows"] = nlohmann::json::array();
        for (const std::string& d : datasets) {
            auto it = rows[i].cells.find(d);
            if (it == rows[i].cells.end()) continue;
            entry["rows"].push_back({{"dataset", d},
                                     {"clean", it->second->clean_accuracy},
                                     {"adv", it->second->adversarial_accuracy},
                                     {"asr", it->second->asr}});
        }
        entry["average"] = averages[i];
        out.push_back(entry);
    }
    std::string twin_path = path + ".json";
    std::ofstream twin(twin_path);
    if (!twin) throw PersistenceError("cannot open report file " + twin_path);
    twin << out.dump(2) << "\n";
    twin.close();
    if (!twin) throw PersistenceError("failed writing report file " + twin_path);
}

}  // namespace noboxlab
