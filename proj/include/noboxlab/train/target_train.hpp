#pragma once

#include "noboxlab/attack/pgd.hpp"
#include "noboxlab/data/dataset.hpp"
#include "noboxlab/models/target.hpp"
#include "noboxlab/train/margin.hpp"

namespace noboxlab {

// Standard cross-entropy training of a fresh target model on clean images.
TargetModel train_target(const InMemoryDataset& data,
                         const TrainSchedule& sched,
                         TrainingTrace* trace_out = nullptr);

// Adversarial training: each batch is replaced by its PGD counterpart crafted
// against the current parameters before the update. The resulting model is
// tagged with the robust provenance even when epsilon degenerates to zero.
TargetModel adversarial_train(const InMemoryDataset& data,
                              const PgdConfig& pgd,
                              const TrainSchedule& sched,
                              TrainingTrace* trace_out = nullptr);

}
