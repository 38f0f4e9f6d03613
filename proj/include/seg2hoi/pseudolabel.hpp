#pragma once

#include <optional>
#include <vector>

#include "seg2hoi/foundation.hpp"
#include "seg2hoi/geometry.hpp"

namespace seg2hoi {

struct PseudoLabelParams {
  double beta_b = 5.0;
  double beta_u = 2.0;
  double gamma = 0.1;
};

/// Union/intersection mask targets for one ground-truth human-object pair.
struct PseudoLabel {
  BinaryMask union_mask;
  std::optional<BinaryMask> intersection_mask;  // absent iff intersection_box is empty
  std::optional<Box> intersection_box;
  int human_query = -1;
  int object_query = -1;
  double gamma = 0.0;
};

/// Index of the candidate minimizing beta_b * L1 + beta_u * (1 - GIoU) against
/// `gt`; ties go to the lowest index. nullopt when there are no candidates.
std::optional<size_t> match_instance(const Box& gt, const std::vector<Box>& candidates, double beta_b,
                                     double beta_u);

/// Matches a GT box against the foundation queries of the right kind (human
/// queries for humans, other foreground queries for objects) whose thresholded
/// mask is non-empty. Returns the foundation query index.
std::optional<int> match_foundation_query(const FoundationOutput& f, const Box& gt, bool human,
                                          const PseudoLabelParams& params);

/// Union of the two masks, cropped to the overlap of their gamma-expanded
/// boxes for the intersection target. nullopt when either mask is empty.
std::optional<PseudoLabel> build_pseudo_label(const BinaryMask& human_mask, const BinaryMask& object_mask,
                                              double gamma);
std::optional<PseudoLabel> build_pseudo_label(const FoundationOutput& f, int human_query, int object_query,
                                              double gamma);

/// Full pipeline for one GT pair; nullopt marks the pair as unmatchable.
std::optional<PseudoLabel> generate_pseudo_label(const FoundationOutput& f, const Box& human_box,
                                                 const Box& object_box, const PseudoLabelParams& params);

}  // namespace seg2hoi
