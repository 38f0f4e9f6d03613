#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "seg2hoi/criterion.hpp"
#include "seg2hoi/foundation.hpp"
#include "seg2hoi/pseudolabel.hpp"
#include "seg2hoi/toyworld.hpp"

namespace seg2hoi {

enum class DatasetFormat { Hico, Vcoco };

std::string to_string(DatasetFormat f);
DatasetFormat dataset_format_from_string(const std::string& s);

struct HoiClass {
  int verb = 0;
  int object = 0;
};

struct HoiCategories {
  std::vector<std::string> objects;
  std::vector<std::string> verbs;
  std::vector<HoiClass> hoi_classes;
  /// V-COCO role per verb ("obj", "instr" or "none"); empty for HICO.
  std::vector<std::string> verb_roles;

  /// Index into hoi_classes, or -1 when the pair is not in the table.
  int hoi_id(int verb, int object) const;
  bool verb_has_object_role(int verb) const;
};

struct AnnotatedBox {
  Box box;
  int category = -1;  // object id, or -1 for a box that only ever appears as a subject
};

struct HoiAnnotation {
  int subject = 0;
  int object = -1;  // -1: no object (V-COCO roles without an object)
  int verb = 0;
};

struct ImageRecord {
  std::string file_name;
  int width = 0;
  int height = 0;
  std::vector<AnnotatedBox> boxes;
  std::vector<HoiAnnotation> hois;
  std::optional<toy::Scene> scene;  // set for generated images
};

struct HoiDataset {
  DatasetFormat format = DatasetFormat::Hico;
  HoiCategories categories;
  std::vector<ImageRecord> images;

  /// Per-HOI-class GT instance counts over the whole dataset.
  std::vector<int> hoi_instance_counts() const;
};

/// Throws std::runtime_error naming every offending record.
HoiDataset load_annotations(const std::string& path, DatasetFormat format);
HoiDataset parse_annotations(const std::string& json_text, DatasetFormat format);
std::string dump_annotations(const HoiDataset& d);

/// Category tables of the generated world.
HoiCategories synth_categories();
/// Deterministic toy scenes: one human disk plus one or two objects, verbs
/// scripted from geometry.
HoiDataset synth_dataset(std::uint64_t seed, int n_images);

/// Verbs implied by the relative placement of a human disk and an object.
std::vector<bool> scripted_verbs(const toy::Shape& human, const toy::Shape& object, int width, int height);
/// Pixel-center extent of a shape rendered alone, normalized.
Box shape_extent(const toy::Shape& s, int width, int height);

/// Ground-truth pairs of one image: annotations sharing (subject, object) are
/// merged into one multi-label verb vector. Pairs without an object are skipped.
std::vector<GroundTruthHOI> ground_truth_pairs(const ImageRecord& image, const HoiCategories& cats);

Image load_image(const ImageRecord& image, const std::string& root);

struct TrainingSample {
  int image_index = 0;
  FoundationOutput foundation;
  std::vector<GroundTruthHOI> gts;
};

/// Runs the frozen model and builds pseudo-labels for every GT pair.
std::vector<TrainingSample> build_samples(const HoiDataset& d, const FoundationModel& model,
                                          const PseudoLabelParams& params, const std::string& root = "");

}  // namespace seg2hoi
