#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "cpfc/network.hpp"

namespace cpfc {

enum class ShapeClass { Circle = 0, Square = 1, Triangle = 2, Cross = 3 };
constexpr int kShapeClassCount = 4;
const char* shape_class_name(ShapeClass c);

// Synthetic classification corpus: one colored shape per image on a
// low-amplitude noise background, with the shape's pixel support as the
// ground-truth region mask. Split 80/20 train/test by index.
struct ShapesDataset {
    int width = 0;
    int height = 0;
    std::vector<Tensor> images;                      // {3,H,W}, values in [0,1]
    std::vector<int> labels;                         // ShapeClass
    std::vector<std::vector<std::uint8_t>> masks;    // row-major 0/1
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;

    LabeledImages train_view() const;
    LabeledImages test_view() const;
};

ShapesDataset generate_shapes_dataset(int count, int width, int height, std::uint64_t seed);

// Four axis-aligned colored rectangles tiling the grid; used to probe
// coalition extraction against known regions.
struct FourRectangles {
    Tensor image;  // {3,H,W}
    std::array<std::vector<std::uint8_t>, 4> regions;  // row-major 0/1, disjoint cover
};

FourRectangles make_four_rectangles(int width, int height, std::uint64_t seed);

}  // namespace cpfc
