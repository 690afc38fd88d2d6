#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "memgan/error.hpp"
#include "memgan/linalg.hpp"
#include "memgan/rng.hpp"

// Synthetic multi-modal generators for desk-scale experiments, plus IDX file
// ingestion for real image data. All generators are pure functions of their
// arguments and the seed.

namespace memgan {

struct Dataset {
    Matrix samples;                    // one sample per row
    std::vector<std::size_t> labels;   // empty when unlabeled
    Matrix mode_centers;               // zero rows when unknown

    std::size_t size() const { return samples.rows; }
    std::size_t dim() const { return samples.cols; }
};

/// Ring of isotropic Gaussians: mode k sits at radius * (cos, sin)(2 pi k / n_modes).
inline Dataset gaussian_ring(std::size_t n_modes, double radius, double stddev, std::size_t n,
                             std::uint64_t seed) {
    if (n_modes == 0) fail(ErrorCode::invalid_argument, "ring needs at least one mode");
    if (stddev < 0.0) fail(ErrorCode::invalid_argument, "stddev must be nonnegative");

    Dataset ds;
    ds.mode_centers = Matrix(n_modes, 2);
    for (std::size_t k = 0; k < n_modes; ++k) {
        const double angle = 2.0 * 3.14159265358979323846 * static_cast<double>(k) /
                             static_cast<double>(n_modes);
        ds.mode_centers.at(k, 0) = radius * std::cos(angle);
        ds.mode_centers.at(k, 1) = radius * std::sin(angle);
    }

    Rng rng(seed);
    ds.samples = Matrix(n, 2);
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = rng.below(n_modes);
        ds.labels[i] = k;
        ds.samples.at(i, 0) = ds.mode_centers.at(k, 0) + stddev * rng.normal();
        ds.samples.at(i, 1) = ds.mode_centers.at(k, 1) + stddev * rng.normal();
    }
    return ds;
}

namespace detail {

enum class ShapeClass : std::size_t { disk = 0, cross = 1, frame = 2, bar = 3 };
inline constexpr std::size_t kShapeClasses = 4;

inline bool shape_hit(ShapeClass cls, double u, double v, double side) {
    const double extent = 0.40 * side;
    switch (cls) {
        case ShapeClass::disk:
            return u * u + v * v <= (0.35 * side) * (0.35 * side);
        case ShapeClass::cross: {
            const double arm = std::max(0.09 * side, 0.6);
            return (std::abs(u) <= arm || std::abs(v) <= arm) &&
                   std::max(std::abs(u), std::abs(v)) <= extent;
        }
        case ShapeClass::frame: {
            const double outer = 0.38 * side;
            const double inner = outer - std::max(0.10 * side, 0.8);
            const double m = std::max(std::abs(u), std::abs(v));
            return m <= outer && m >= inner;
        }
        case ShapeClass::bar:
            return std::abs(v) <= std::max(0.12 * side, 0.6) && std::abs(u) <= 0.42 * side;
    }
    return false;
}

}  // namespace detail

/// Binary side x side images of four shape classes (disk, cross, frame, bar)
/// with uniform integer translation jitter and uniform rotation jitter. Pixels
/// are flattened row-major into [0, 1]. Labels run 0..3, n_per_class each;
/// mode_centers are the per-class mean images.
inline Dataset synthetic_shapes(std::size_t side, std::size_t n_per_class, std::uint64_t seed,
                                std::size_t max_shift = 2, double max_rot_deg = 20.0) {
    if (side < 8) fail(ErrorCode::invalid_argument, "shapes need side >= 8");

    const std::size_t dim = side * side;
    const std::size_t n = detail::kShapeClasses * n_per_class;
    Dataset ds;
    ds.samples = Matrix(n, dim);
    ds.labels.resize(n);
    ds.mode_centers = Matrix(detail::kShapeClasses, dim, 0.0);

    Rng rng(seed);
    const double center = static_cast<double>(side) / 2.0;
    std::size_t row = 0;
    for (std::size_t cls = 0; cls < detail::kShapeClasses; ++cls) {
        for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
            const double dx = max_shift == 0 ? 0.0
                                             : static_cast<double>(rng.below(2 * max_shift + 1)) -
                                                   static_cast<double>(max_shift);
            const double dy = max_shift == 0 ? 0.0
                                             : static_cast<double>(rng.below(2 * max_shift + 1)) -
                                                   static_cast<double>(max_shift);
            const double angle = max_rot_deg == 0.0
                                     ? 0.0
                                     : (2.0 * rng.uniform() - 1.0) * max_rot_deg * 3.14159265358979323846 / 180.0;
            const double ca = std::cos(angle), sa = std::sin(angle);
            auto out = ds.samples.row(row);
            for (std::size_t r = 0; r < side; ++r) {
                for (std::size_t c = 0; c < side; ++c) {
                    // inverse-map the pixel center into canonical shape coordinates
                    const double px = static_cast<double>(c) + 0.5 - center - dx;
                    const double py = static_cast<double>(r) + 0.5 - center - dy;
                    const double u = ca * px + sa * py;
                    const double v = -sa * px + ca * py;
                    out[r * side + c] =
                        detail::shape_hit(static_cast<detail::ShapeClass>(cls), u, v,
                                          static_cast<double>(side))
                            ? 1.0
                            : 0.0;
                }
            }
            ds.labels[row] = cls;
            auto mean_row = ds.mode_centers.row(cls);
            for (std::size_t d = 0; d < dim; ++d) mean_row[d] += out[d];
        }
    }
    if (n_per_class > 0) {
        for (auto& x : ds.mode_centers.data) x /= static_cast<double>(n_per_class);
    }
    return ds;
}

// ---------------------------------------------------------------------------
// IDX file format (big-endian, magic-tagged)

namespace detail {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803u;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801u;

inline std::uint32_t read_be_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) fail(ErrorCode::truncated_file, path + ": truncated header");
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

inline void write_be_u32(std::ostream& out, std::uint32_t v) {
    const char b[4] = {static_cast<char>((v >> 24) & 0xffu), static_cast<char>((v >> 16) & 0xffu),
                       static_cast<char>((v >> 8) & 0xffu), static_cast<char>(v & 0xffu)};
    out.write(b, 4);
}

}  // namespace detail

/// Parses an IDX image file (magic 0x00000803) into rows of [0, 1] pixels.
inline Dataset load_idx(const std::string& images_path) {
    std::ifstream in(images_path, std::ios::binary);
    if (!in) fail(ErrorCode::io_failure, "cannot open " + images_path);

    const std::uint32_t magic = detail::read_be_u32(in, images_path);
    if (magic != detail::kIdxImagesMagic)
        fail(ErrorCode::bad_magic, images_path + ": expected IDX image magic 0x00000803");
    const std::uint32_t count = detail::read_be_u32(in, images_path);
    const std::uint32_t rows = detail::read_be_u32(in, images_path);
    const std::uint32_t cols = detail::read_be_u32(in, images_path);

    const std::size_t dim = static_cast<std::size_t>(rows) * cols;
    Dataset ds;
    ds.samples = Matrix(count, dim);
    std::vector<unsigned char> buf(dim);
    for (std::uint32_t i = 0; i < count; ++i) {
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(dim));
        if (!in) fail(ErrorCode::truncated_file, images_path + ": truncated pixel data");
        auto row = ds.samples.row(i);
        for (std::size_t d = 0; d < dim; ++d) row[d] = static_cast<double>(buf[d]) / 255.0;
    }
    return ds;
}

/// Parses paired IDX image and label files; counts must agree.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    Dataset ds = load_idx(images_path);

    std::ifstream in(labels_path, std::ios::binary);
    if (!in) fail(ErrorCode::io_failure, "cannot open " + labels_path);
    const std::uint32_t magic = detail::read_be_u32(in, labels_path);
    if (magic != detail::kIdxLabelsMagic)
        fail(ErrorCode::bad_magic, labels_path + ": expected IDX label magic 0x00000801");
    const std::uint32_t count = detail::read_be_u32(in, labels_path);
    if (count != ds.size())
        fail(ErrorCode::dimension_mismatch, "image file has " + std::to_string(ds.size()) +
                                                " items but label file has " + std::to_string(count));
    ds.labels.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const int c = in.get();
        if (c == std::char_traits<char>::eof())
            fail(ErrorCode::truncated_file, labels_path + ": truncated label data");
        ds.labels[i] = static_cast<std::size_t>(c);
    }
    return ds;
}

/// Writes samples (and labels, when present) as IDX files. Pixels are
/// quantized to bytes, so a reload matches within 1/255.
inline void save_idx(const Dataset& ds, const std::string& images_path,
                     const std::string& labels_path = {}) {
    // factor the flat dimension into rows x cols (square when possible)
    std::size_t rows = static_cast<std::size_t>(std::sqrt(static_cast<double>(ds.dim())));
    while (rows > 1 && ds.dim() % rows != 0) --rows;
    const std::size_t cols = ds.dim() / rows;

    std::ofstream out(images_path, std::ios::binary);
    if (!out) fail(ErrorCode::io_failure, "cannot open " + images_path + " for writing");
    detail::write_be_u32(out, detail::kIdxImagesMagic);
    detail::write_be_u32(out, static_cast<std::uint32_t>(ds.size()));
    detail::write_be_u32(out, static_cast<std::uint32_t>(rows));
    detail::write_be_u32(out, static_cast<std::uint32_t>(cols));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (double v : ds.samples.row(i)) {
            const double clamped = std::clamp(v, 0.0, 1.0);
            out.put(static_cast<char>(static_cast<unsigned char>(std::lround(clamped * 255.0))));
        }
    }
    if (!out) fail(ErrorCode::io_failure, images_path + ": write failed");

    if (!labels_path.empty() && !ds.labels.empty()) {
        std::ofstream lout(labels_path, std::ios::binary);
        if (!lout) fail(ErrorCode::io_failure, "cannot open " + labels_path + " for writing");
        detail::write_be_u32(lout, detail::kIdxLabelsMagic);
        detail::write_be_u32(lout, static_cast<std::uint32_t>(ds.labels.size()));
        for (std::size_t l : ds.labels) lout.put(static_cast<char>(static_cast<unsigned char>(l)));
        if (!lout) fail(ErrorCode::io_failure, labels_path + ": write failed");
    }
}

/// Formats a double with the shortest round-trip representation.
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

/// CSV export with a header row (dim_0,...,dim_{D-1}[,label]).
inline void save_csv(const Dataset& ds, std::ostream& out) {
    for (std::size_t d = 0; d < ds.dim(); ++d) {
        if (d) out << ',';
        out << "dim_" << d;
    }
    if (!ds.labels.empty()) out << ",label";
    out << '\n';
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto row = ds.samples.row(i);
        for (std::size_t d = 0; d < ds.dim(); ++d) {
            if (d) out << ',';
            out << format_double(row[d]);
        }
        if (!ds.labels.empty()) out << ',' << ds.labels[i];
        out << '\n';
    }
}

inline void save_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::io_failure, "cannot open " + path + " for writing");
    save_csv(ds, out);
    if (!out) fail(ErrorCode::io_failure, path + ": write failed");
}

}  // namespace memgan
