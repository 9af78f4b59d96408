#pragma once

#include "irgcn/dataset.hpp"

#include <string_view>

namespace irgcn {

enum class Preset { contrastive, mixed };

Preset parse_preset(std::string_view name);

/// Synthetic answer-selection data with kFeatureCount columns, already split
/// and standardized.
///
/// contrastive: each answer has a latent quality q and the accepted answer is
/// the argmax within its question. Column 0 is q plus a large per-question
/// offset, so a single tuple says little about its label while differences
/// inside a question say almost everything. Other columns are noise and
/// authors are almost never repeated.
///
/// mixed: quality also depends on a latent author skill and on earliness.
/// Column 1 is a noisy skill proxy, columns 2 and 3 carry answer timing, and
/// authors recur so skill ratings become informative.
Dataset synthesize(Preset preset, std::size_t questions, std::uint64_t seed, double test_fraction = 0.2);

}  // namespace irgcn
