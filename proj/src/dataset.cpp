#include "cpfc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cpfc {

const char* shape_class_name(ShapeClass c) {
    switch (c) {
        case ShapeClass::Circle: return "circle";
        case ShapeClass::Square: return "square";
        case ShapeClass::Triangle: return "triangle";
        case ShapeClass::Cross: return "cross";
    }
    return "?";
}

LabeledImages ShapesDataset::train_view() const {
    LabeledImages v;
    for (size_t i : train_indices) {
        v.images.push_back(images[i]);
        v.labels.push_back(labels[i]);
    }
    return v;
}

LabeledImages ShapesDataset::test_view() const {
    LabeledImages v;
    for (size_t i : test_indices) {
        v.images.push_back(images[i]);
        v.labels.push_back(labels[i]);
    }
    return v;
}

namespace {

bool inside_shape(ShapeClass kind, double dx, double dy, double r) {
    switch (kind) {
        case ShapeClass::Circle:
            return dx * dx + dy * dy <= r * r;
        case ShapeClass::Square:
            return std::abs(dx) <= r && std::abs(dy) <= r;
        case ShapeClass::Triangle: {
            // upward isoceles: apex at dy = -r, base at dy = +r
            if (dy < -r || dy > r) return false;
            double half = (dy + r) * 0.5;
            return std::abs(dx) <= half;
        }
        case ShapeClass::Cross: {
            double bar = std::max(1.0, r / 3.0);
            return (std::abs(dx) <= bar && std::abs(dy) <= r) ||
                   (std::abs(dy) <= bar && std::abs(dx) <= r);
        }
    }
    return false;
}

}  // namespace

ShapesDataset generate_shapes_dataset(int count, int width, int height, std::uint64_t seed) {
    if (count < 8) throw std::invalid_argument("generate_shapes_dataset: need at least 8 samples");
    if (width < 16 || height < 16)
        throw std::invalid_argument("generate_shapes_dataset: size must be at least 16x16");

    Rng rng(seed);
    ShapesDataset ds;
    ds.width = width;
    ds.height = height;

    double min_extent = std::min(width, height);
    for (int i = 0; i < count; ++i) {
        ShapeClass kind = static_cast<ShapeClass>(i % kShapeClassCount);
        double r = rng.uniform(0.15, 0.22) * min_extent;
        r = std::max(r, 2.0);
        double cx = rng.uniform(r + 1.0, width - 2.0 - r);
        double cy = rng.uniform(r + 1.0, height - 2.0 - r);

        float bg[3], fg[3];
        for (int ch = 0; ch < 3; ++ch) bg[ch] = static_cast<float>(rng.uniform(0.10, 0.35));
        for (int ch = 0; ch < 3; ++ch) fg[ch] = static_cast<float>(rng.uniform(0.55, 1.00));

        Tensor img({3, height, width});
        std::vector<std::uint8_t> mask(static_cast<size_t>(width) * height, 0);
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                bool in = inside_shape(kind, x - cx, y - cy, r);
                if (in) mask[static_cast<size_t>(y) * width + x] = 1;
                for (int ch = 0; ch < 3; ++ch) {
                    float noise = static_cast<float>(rng.uniform(-0.05, 0.05));
                    float v = (in ? fg[ch] : bg[ch]) + noise;
                    img.data()[(static_cast<size_t>(ch) * height + y) * width + x] =
                        std::clamp(v, 0.0f, 1.0f);
                }
            }
        }
        ds.images.push_back(std::move(img));
        ds.labels.push_back(static_cast<int>(kind));
        ds.masks.push_back(std::move(mask));
    }

    size_t train_count = static_cast<size_t>(count) * 8 / 10;
    for (size_t i = 0; i < static_cast<size_t>(count); ++i) {
        if (i < train_count) ds.train_indices.push_back(i);
        else ds.test_indices.push_back(i);
    }
    return ds;
}

FourRectangles make_four_rectangles(int width, int height, std::uint64_t seed) {
    Rng rng(seed);
    int sx = static_cast<int>(rng.uniform(0.35, 0.65) * width);
    int sy = static_cast<int>(rng.uniform(0.35, 0.65) * height);

    // well-separated base colors, jittered per image
    const float palette[4][3] = {
        {0.95f, 0.20f, 0.20f}, {0.20f, 0.90f, 0.25f}, {0.20f, 0.35f, 0.95f}, {0.95f, 0.90f, 0.25f}};
    float colors[4][3];
    for (int k = 0; k < 4; ++k)
        for (int ch = 0; ch < 3; ++ch)
            colors[k][ch] = std::clamp(
                palette[k][ch] + static_cast<float>(rng.uniform(-0.08, 0.08)), 0.0f, 1.0f);

    FourRectangles out;
    out.image = Tensor({3, height, width});
    for (auto& region : out.regions)
        region.assign(static_cast<size_t>(width) * height, 0);

    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            int quadrant = (y < sy ? 0 : 2) + (x < sx ? 0 : 1);
            out.regions[static_cast<size_t>(quadrant)][static_cast<size_t>(y) * width + x] = 1;
            for (int ch = 0; ch < 3; ++ch) {
                float v = colors[quadrant][ch] + static_cast<float>(rng.uniform(-0.02, 0.02));
                out.image.data()[(static_cast<size_t>(ch) * height + y) * width + x] =
                    std::clamp(v, 0.0f, 1.0f);
            }
        }
    }
    return out;
}

}  // namespace cpfc
