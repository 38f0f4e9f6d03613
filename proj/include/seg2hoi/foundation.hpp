#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "seg2hoi/geometry.hpp"
#include "seg2hoi/image.hpp"

namespace seg2hoi {

using Matrix = Eigen::MatrixXd;

/// One level of the multi-scale feature pyramid, flattened row-major.
struct FeatureLevel {
  int height = 0;
  int width = 0;
  Matrix features;  // (height * width) x C_d
};

/// Everything the frozen segmentation model hands to the HOI decoder for one image.
struct FoundationOutput {
  int grid_height = 0;  // H / 4
  int grid_width = 0;   // W / 4
  std::vector<FeatureLevel> levels;
  Matrix queries;          // N_k x C_d decoder queries
  std::vector<Box> boxes;  // N_k instance boxes
  Matrix class_logits;     // N_k x N_inst, last column = background
  Matrix mask_logits;      // N_k x (grid_height * grid_width)
  Matrix pixel_embedding;  // (grid_height * grid_width) x C_d
  std::vector<std::string> class_names;
  int human_class = 0;

  int num_queries() const { return static_cast<int>(queries.rows()); }
  int hidden() const { return static_cast<int>(queries.cols()); }
  int cells() const { return grid_height * grid_width; }
  int background_class() const { return static_cast<int>(class_logits.cols()) - 1; }

  int predicted_class(int query) const;
  double max_foreground_logit(int query) const;
  BinaryMask instance_mask(int query) const;
  /// All pyramid levels stacked into one (N_s x C_d) key/value set.
  Matrix flattened_features() const;
  /// Throws std::logic_error when the shared leading dimensions disagree.
  void validate() const;
};

/// Mask logits m = (q P) . f_seg at every cell: one row of length `cells`.
Eigen::RowVectorXd instance_mask_from_query(const Eigen::RowVectorXd& query, const Matrix& projection,
                                            const Matrix& pixel_embedding);

/// Contract for a frozen segmentation backbone. Implementations are read-only
/// after construction and safe to call from several threads.
class FoundationModel {
 public:
  virtual ~FoundationModel() = default;
  virtual FoundationOutput extract(const Image& image) const = 0;
  virtual int hidden() const = 0;
  virtual int top_k() const = 0;
  virtual const std::vector<std::string>& class_names() const = 0;
  /// SHA-256 over every parameter; identical before and after HOI training.
  virtual std::string parameter_hash() const = 0;
};

struct ToyFoundationConfig {
  int hidden = 32;
  int top_k = 25;
  std::uint64_t seed = 7;
  int max_side = 1024;
  int min_component_area = 6;
};

/// Rule-based color/shape segmenter over the toy world with seeded fixed random
/// feature projections.
class ToyFoundation final : public FoundationModel {
 public:
  explicit ToyFoundation(ToyFoundationConfig config = {});

  FoundationOutput extract(const Image& image) const override;
  int hidden() const override { return config_.hidden; }
  int top_k() const override { return config_.top_k; }
  const std::vector<std::string>& class_names() const override;
  std::string parameter_hash() const override;

  const ToyFoundationConfig& config() const { return config_; }
  const Matrix& mask_projection() const { return mask_projection_; }

 private:
  ToyFoundationConfig config_;
  Matrix query_proj_;
  Matrix pixel_proj_;
  Matrix level0_proj_;
  Matrix level1_proj_;
  Matrix mask_projection_;
};

void write_foundation_cache(const std::string& path, const FoundationOutput& out);
FoundationOutput read_foundation_cache(const std::string& path);

}  // namespace seg2hoi
