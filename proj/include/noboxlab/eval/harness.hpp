#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "noboxlab/attack/generator.hpp"
#include "noboxlab/data/dataset.hpp"
#include "noboxlab/models/classifier.hpp"

namespace noboxlab {

// Outcome of evaluating one attacker against one target on one dataset.
// Accuracies are percentages computed as 100 * correct / total before any
// rounding, so the identity asr == clean - adversarial holds exactly.
struct EvaluationReport {
    std::string dataset;
    std::string target_id;
    std::string target_provenance;
    std::string attacker_id;
    double clean_accuracy = 0.0;        // percent in [0, 100]
    double adversarial_accuracy = 0.0;  // percent in [0, 100]
    double asr = 0.0;                   // percent; negative when the attack helps
    std::size_t n_samples = 0;
    double epsilon = 0.0;
    std::uint64_t seed = 0;

    // Validates ranges and the exact asr identity.
    static EvaluationReport make(std::string dataset, std::string target_id,
                                 std::string target_provenance,
                                 std::string attacker_id, double clean_accuracy,
                                 double adversarial_accuracy, double asr,
                                 std::size_t n_samples, double epsilon,
                                 std::uint64_t seed);
};

// Predicted class per sample; ties broken toward the lowest class index.
LabelVector classify(Classifier& model, const ImageBatch& batch);

// clean_acc - adv_acc with both inputs range-checked to [0, 100].
// The result may be negative.
double attack_success_rate(double clean_acc, double adv_acc);

// Maps a clean batch to a crafted batch over the same ids, same order.
using AttackerFn = std::function<ImageBatch(const ImageBatch&)>;

// Identification labels for an evaluation run; carried into the report.
struct EvalJob {
    std::string dataset;
    std::string target_id;
    std::string target_provenance;
    std::string attacker_id;
    std::uint64_t seed = 0;
    std::size_t batch_size = 32;
};

// Runs the attacker over every sample in storage order, re-verifies the
// perturbation budget on every crafted sample (violations abort with a
// BudgetError naming the ids), and accounts clean and adversarial accuracy
// over the identical sample set. Results are independent of batch_size.
EvaluationReport evaluate(Classifier& target, const AttackerFn& attacker,
                          const InMemoryDataset& data,
                          const AttackBudget& budget, const EvalJob& job);

// Writes an aligned text table (rows per target, columns per dataset, cells
// = ASR with two decimals, plus a per-target Average column) to `path` and a
// machine-readable JSON twin to `path + ".json"`.
void render_report(const std::vector<EvaluationReport>& reports,
                   const std::string& path);

}  // namespace noboxlab
