#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "gatescope/geometry/point_set.hpp"
#include "gatescope/tasks/corpus.hpp"
#include "gatescope/transformer/model.hpp"

namespace gatescope::testing {

inline geometry::PointSet uniform_cube(std::size_t n, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> data(n * d);
    for (auto& x : data) x = u(rng);
    return geometry::PointSet(n, d, std::move(data));
}

/// Isotropic Gaussian blobs; labels[i] is the blob of point i.
inline geometry::PointSet gaussian_blobs(const std::vector<std::vector<double>>& centers, std::size_t per_blob,
                                         double sigma, std::uint64_t seed, std::vector<int>* labels = nullptr) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, sigma);
    const std::size_t d = centers.front().size();
    std::vector<double> data;
    if (labels) labels->clear();
    for (std::size_t c = 0; c < centers.size(); ++c)
        for (std::size_t i = 0; i < per_blob; ++i) {
            for (std::size_t k = 0; k < d; ++k) data.push_back(centers[c][k] + g(rng));
            if (labels) labels->push_back(static_cast<int>(c));
        }
    return geometry::PointSet(centers.size() * per_blob, d, std::move(data));
}

/// Small corpus that keeps tests fast.
inline tasks::DatasetConfig small_dataset_config(std::size_t n_classes = 4, std::size_t per_class = 10,
                                                 std::size_t image_length = 8) {
    tasks::DatasetConfig c;
    c.n_classes = n_classes;
    c.n_per_class = per_class;
    c.image_length = image_length;
    c.n_image_codes = 16;
    c.max_seq_len = 24;
    c.seed = 11;
    return c;
}

inline transformer::ModelConfig micro_model(const tasks::Vocabulary& vocab, std::size_t max_seq_len = 24,
                                            std::size_t n_layers = 2, std::size_t d_model = 16) {
    transformer::ModelConfig m;
    m.n_layers = n_layers;
    m.n_heads = 2;
    m.d_model = d_model;
    m.d_mlp = 4 * d_model;
    m.vocab_size = vocab.size();
    m.max_seq_len = max_seq_len;
    m.embedding_groups = vocab.modality_groups();
    m.seed = 3;
    return m;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("gatescope_" + tag + "_" + std::to_string(rd()));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace gatescope::testing
