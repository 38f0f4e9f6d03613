#include <doctest.h>

#include <filesystem>

#include "seg2hoi/dataset.hpp"
#include "seg2hoi/foundation.hpp"
#include "seg2hoi/toyworld.hpp"

using namespace seg2hoi;

TEST_CASE("toy shapes render and label consistently") {
  toy::Scene s;
  s.shapes.push_back({toy::ShapeKind::Disk, 0, 20, 30, 10, 10});
  s.shapes.push_back({toy::ShapeKind::Rectangle, 1, 40, 30, 5, 4});
  const Image img = toy::render(s);
  CHECK(img.width == 64);
  const auto labels = toy::label_map(s);
  CHECK(labels[30 * 64 + 20] == 0);
  CHECK(labels[30 * 64 + 40] == 1);
  CHECK(labels[0] == -1);
  const std::uint8_t* px = img.pixel(20, 30);
  CHECK(px[0] == toy::kPalette[0][0]);
  CHECK(toy::class_of(toy::ShapeKind::Disk) == toy::kHumanClass);
}

TEST_CASE("toy foundation segments every synth instance with the right class") {
  const ToyFoundation model;
  const HoiDataset d = synth_dataset(3, 16);
  for (const auto& rec : d.images) {
    const FoundationOutput f = model.extract(toy::render(*rec.scene));
    CHECK_NOTHROW(f.validate());
    CHECK(f.num_queries() == model.top_k());
    CHECK(f.grid_height == 16);
    for (const auto& shape : rec.scene->shapes) {
      const Box gt = shape_extent(shape, 64, 64);
      bool found = false;
      for (int q = 0; q < f.num_queries(); ++q) {
        if (f.predicted_class(q) == toy::class_of(shape.kind) && iou(f.boxes[static_cast<size_t>(q)], gt) > 0.7) {
          found = true;
        }
      }
      CHECK(found);
    }
  }
}

TEST_CASE("mask logits equal the query-projection product") {
  const ToyFoundation model;
  const HoiDataset d = synth_dataset(0, 2);
  const FoundationOutput f = model.extract(toy::render(*d.images[0].scene));
  for (int q = 0; q < f.num_queries(); ++q) {
    const Eigen::RowVectorXd m = instance_mask_from_query(f.queries.row(q), model.mask_projection(), f.pixel_embedding);
    CHECK((m - f.mask_logits.row(q)).cwiseAbs().maxCoeff() < 1e-12);
  }
  // The first query is a foreground instance with a non-empty mask.
  CHECK(f.predicted_class(0) != f.background_class());
  CHECK_FALSE(f.instance_mask(0).empty());
}

TEST_CASE("blank image yields only background proposals") {
  const ToyFoundation model;
  const FoundationOutput f = model.extract(Image(64, 64, 205));
  for (int q = 0; q < f.num_queries(); ++q) CHECK(f.predicted_class(q) == f.background_class());
}

TEST_CASE("extraction is deterministic and the hash is stable") {
  const ToyFoundation a, b;
  CHECK(a.parameter_hash() == b.parameter_hash());
  CHECK(a.parameter_hash().size() == 64);
  ToyFoundationConfig other;
  other.seed = 8;
  CHECK(ToyFoundation(other).parameter_hash() != a.parameter_hash());
  const Image img = toy::render(*synth_dataset(5, 1).images[0].scene);
  const FoundationOutput f1 = a.extract(img), f2 = a.extract(img);
  CHECK(f1.queries == f2.queries);
  CHECK(f1.mask_logits == f2.mask_logits);
}

TEST_CASE("unsupported image sizes are rejected") {
  const ToyFoundation model;
  CHECK_THROWS_AS(model.extract(Image(30, 64)), std::invalid_argument);
  ToyFoundationConfig small;
  small.max_side = 32;
  CHECK_THROWS_AS(ToyFoundation(small).extract(Image(64, 64)), std::invalid_argument);
}

TEST_CASE("foundation cache round trip") {
  const ToyFoundation model;
  const FoundationOutput f = model.extract(toy::render(*synth_dataset(2, 1).images[0].scene));
  const auto path = (std::filesystem::temp_directory_path() / "seg2hoi_cache_test.s2hf").string();
  write_foundation_cache(path, f);
  const FoundationOutput g = read_foundation_cache(path);
  CHECK(g.num_queries() == f.num_queries());
  CHECK((g.queries - f.queries).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(g.boxes.size() == f.boxes.size());
  for (int q = 0; q < f.num_queries(); ++q) CHECK(g.instance_mask(q) == f.instance_mask(q));
  std::filesystem::remove(path);
}
