#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gatescope::geometry {

/// Dense n×d embedding matrix, row-major, with one integer id per row.
/// Construction rejects empty shapes, non-finite entries and duplicate ids.
class PointSet {
public:
    PointSet() = default;
    PointSet(std::size_t n, std::size_t d, std::vector<double> data, std::vector<std::int64_t> ids = {});

    std::size_t size() const { return n_; }
    std::size_t dim() const { return d_; }
    bool empty() const { return n_ == 0; }

    std::span<const double> row(std::size_t i) const { return {data_.data() + i * d_, d_}; }
    const std::vector<double>& data() const { return data_; }
    const std::vector<std::int64_t>& ids() const { return ids_; }

    PointSet select(std::span<const std::size_t> rows) const;

private:
    std::size_t n_ = 0;
    std::size_t d_ = 0;
    std::vector<double> data_;
    std::vector<std::int64_t> ids_;
};

double squared_distance(std::span<const double> a, std::span<const double> b);
double distance(std::span<const double> a, std::span<const double> b);

/// Header is JSON {n, d, dtype: "f32", order: "row-major", payload, ids};
/// payload is raw little-endian float32 next to the header.
void save_point_set(const std::filesystem::path& header, const PointSet& points);
PointSet load_point_set(const std::filesystem::path& header);

/// Categorical labels, one UTF-8 token per line.
std::vector<std::string> load_labels(const std::filesystem::path& path);
void save_labels(const std::filesystem::path& path, std::span<const std::string> labels);

}  // namespace gatescope::geometry
