#include "gatescope/geometry/point_set.hpp"

#include <cmath>
#include <fstream>
#include <unordered_set>

#include "gatescope/common/error.hpp"
#include "gatescope/common/io.hpp"

namespace gatescope::geometry {

PointSet::PointSet(std::size_t n, std::size_t d, std::vector<double> data, std::vector<std::int64_t> ids)
    : n_(n), d_(d), data_(std::move(data)), ids_(std::move(ids)) {
    require(n_ >= 1 && d_ >= 1, "PointSet needs n >= 1 and d >= 1");
    require(data_.size() == n_ * d_, "PointSet data size does not match n*d");
    for (double v : data_) {
        if (!std::isfinite(v)) throw ConfigError("PointSet contains a non-finite coordinate");
    }
    if (ids_.empty()) {
        ids_.resize(n_);
        for (std::size_t i = 0; i < n_; ++i) ids_[i] = static_cast<std::int64_t>(i);
    }
    require(ids_.size() == n_, "PointSet ids must be index-aligned with rows");
    std::unordered_set<std::int64_t> seen(ids_.begin(), ids_.end());
    require(seen.size() == n_, "PointSet ids must be unique");
}

PointSet PointSet::select(std::span<const std::size_t> rows) const {
    std::vector<double> out;
    out.reserve(rows.size() * d_);
    std::vector<std::int64_t> out_ids;
    out_ids.reserve(rows.size());
    for (std::size_t r : rows) {
        require(r < n_, "row index out of range");
        auto src = row(r);
        out.insert(out.end(), src.begin(), src.end());
        out_ids.push_back(ids_[r]);
    }
    return PointSet(rows.size(), d_, std::move(out), std::move(out_ids));
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double diff = a[k] - b[k];
        s += diff * diff;
    }
    return s;
}

double distance(std::span<const double> a, std::span<const double> b) {
    return std::sqrt(squared_distance(a, b));
}

void save_point_set(const std::filesystem::path& header, const PointSet& points) {
    auto payload = header;
    payload.replace_extension(".bin");
    std::vector<float> values(points.data().begin(), points.data().end());
    io::write_f32(payload, values);
    nlohmann::json h;
    h["n"] = points.size();
    h["d"] = points.dim();
    h["dtype"] = "f32";
    h["order"] = "row-major";
    h["endianness"] = "little";
    h["payload"] = payload.filename().string();
    h["ids"] = points.ids();
    io::write_json(header, h);
}

PointSet load_point_set(const std::filesystem::path& header) {
    const auto h = io::read_json(header);
    try {
        require(h.at("dtype").get<std::string>() == "f32", "only dtype f32 point sets are supported");
        require(h.value("order", std::string("row-major")) == "row-major", "only row-major point sets are supported");
        const auto n = h.at("n").get<std::size_t>();
        const auto d = h.at("d").get<std::size_t>();
        const auto payload = header.parent_path() / h.at("payload").get<std::string>();
        const auto raw = io::read_f32(payload, n * d);
        std::vector<std::int64_t> ids;
        if (h.contains("ids")) ids = h.at("ids").get<std::vector<std::int64_t>>();
        return PointSet(n, d, std::vector<double>(raw.begin(), raw.end()), std::move(ids));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("invalid point-set header " + header.string() + ": " + e.what());
    }
}

std::vector<std::string> load_labels(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::string> labels;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        labels.push_back(line);
    }
    return labels;
}

void save_labels(const std::filesystem::path& path, std::span<const std::string> labels) {
    std::string text;
    for (const auto& l : labels) {
        require(l.find('\n') == std::string::npos && !l.empty(), "labels must be non-empty single-line tokens");
        text += l;
        text += '\n';
    }
    io::write_text(path, text);
}

}  // namespace gatescope::geometry
