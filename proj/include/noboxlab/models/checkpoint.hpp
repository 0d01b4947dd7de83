#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "noboxlab/core/tensor.hpp"
#include "noboxlab/nn/layers.hpp"

namespace noboxlab {

// Binary parameter blob (named double tensors) plus a JSON metadata sidecar
// at <path>.json. The sidecar records kind, a content digest of the blob,
// and caller-supplied metadata. Both files are written atomically.
//
// The digest string has the form "<algorithm>:<hex>".
std::string write_checkpoint(const std::string& path,
                             const std::vector<ParamView>& params,
                             const std::string& kind, nlohmann::json metadata);

struct LoadedCheckpoint {
    std::map<std::string, Tensor> tensors;
    nlohmann::json metadata;   // full sidecar content
    std::string kind;
    std::string digest;
};

// Verifies the digest and returns the stored tensors and metadata.
// Errors: CheckpointNotFoundError (either file missing),
// CheckpointIntegrityError (corrupt blob or digest mismatch),
// CheckpointSpecError (kind differs from expect_kind; pass "" to skip).
LoadedCheckpoint read_checkpoint(const std::string& path,
                                 const std::string& expect_kind);

// Copies stored tensors into the given parameter views by name; every view
// must be matched exactly in name and size, and no stored tensor may be left
// over. Violations raise CheckpointSpecError naming the offender.
void restore_params(const LoadedCheckpoint& ck,
                    const std::vector<ParamView>& params);

// Digest of the current parameter values (same algorithm as checkpoints),
// usable as a freeze fingerprint without touching disk.
std::string params_digest(const std::vector<ParamView>& params);

}
