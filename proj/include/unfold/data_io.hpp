#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "unfold/core_model.hpp"

namespace unfold {

/// Named, counter-addressed sub-streams of one master seed. The same
/// (seed, name, counter) triple always yields the same engine state.
class RandomStreams {
public:
    explicit RandomStreams(std::uint64_t master_seed) : seed_(master_seed) {}

    std::uint64_t master_seed() const { return seed_; }
    std::uint64_t derive(const std::string& name, std::uint64_t counter = 0) const;
    std::mt19937_64 stream(const std::string& name, std::uint64_t counter = 0) const;

private:
    std::uint64_t seed_;
};

/// Matrix of i.i.d. standard normals filled column by column.
Matrix gaussian_matrix(Index rows, Index cols, std::mt19937_64& rng);

MeasurementSetup gaussian_measurement(Index m, Index n, std::uint64_t seed, Normalization normalization);

enum class SignalModel { piecewise_constant, k_sparse };

const char* to_string(SignalModel m);
SignalModel signal_model_from_string(const std::string& s);

struct Dataset {
    Matrix X;  // n×s
    Matrix Y;  // m×s
    std::string split;
    std::map<std::string, std::string> provenance;

    Index size() const { return X.cols(); }
};

/// Signals with k nonzeros in the chosen domain: k jumps of a piecewise
/// constant profile (sparse under finite differences) or k nonzero entries.
/// Every column is scaled to unit l2 norm, so B_in = 1. Y = AX + noise_std·N(0, 1).
struct SynthParams {
    Index n = 64;
    Index s = 2000;
    Index k = 8;
    double noise_std = 1e-2;
    SignalModel model = SignalModel::piecewise_constant;
    std::uint64_t seed = 0;
    std::string split = "train";
};

Dataset synth_sparse_dataset(const SynthParams& p, const MeasurementSetup& setup);

/// Y = AX + noise_std·N(0, 1) with the noise drawn from the "noise/<split>" stream.
Matrix form_observations(const Matrix& X, const MeasurementSetup& setup, double noise_std, std::uint64_t seed,
                         const std::string& split);

/// Loads grayscale images scaled to [0, 1], one column each (column-major
/// pixel order). `path` may be a binary PGM (P5) or ASCII PGM (P2) file, a
/// directory of them, or a UNFT tensor of shape (count, pixels) or
/// (count, height, width). With limit > 0 the first `limit` images of a
/// seed-dependent permutation are kept.
Dataset image_ingest(const std::string& path, Index limit, std::uint64_t seed, const MeasurementSetup& setup,
                     double noise_std, const std::string& split = "train");

/// Decodes one PGM file into a column-major vector in [0, 1].
Vector read_pgm(const std::string& path, Index* height = nullptr, Index* width = nullptr);
void write_pgm(const std::string& path, const Matrix& pixels);  // values in [0, 1]

/// Raw tensor container: "UNFT", u32 version, u32 rank, u64 dims, f64 row-major payload.
struct Tensor {
    std::vector<std::uint64_t> dims;
    std::vector<double> data;
};
void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);

/// Self-describing checkpoint container. Config values are strings; doubles
/// are stored with 17 significant digits so they round-trip exactly.
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;
    std::uint32_t version = kVersion;
    std::map<std::string, std::string> config;
    std::map<std::string, Matrix> tensors;

    void set(const std::string& key, const std::string& value) { config[key] = value; }
    void set(const std::string& key, double value);
    void set(const std::string& key, std::int64_t value);
    void set(const std::string& key, std::uint64_t value);
    const std::string& get(const std::string& key) const;
    double get_double(const std::string& key) const;
    std::int64_t get_int(const std::string& key) const;
    std::uint64_t get_uint(const std::string& key) const;
    bool has(const std::string& key) const { return config.count(key) != 0; }
    const Matrix& tensor(const std::string& name) const;

    bool operator==(const Checkpoint& o) const;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

struct EpochMetrics {
    int epoch = 0;
    double epsilon = 0.0;
    double clean_test_mse = 0.0;
    double adv_test_mse = 0.0;
    double adv_train_mse = 0.0;
    double adv_ege = 0.0;
};

struct MetricsRecord {
    std::vector<EpochMetrics> rows;
};

std::string format_double(double v);  // %.17g
std::string metrics_csv(const MetricsRecord& r);
void write_metrics(const std::string& path, const MetricsRecord& r);
MetricsRecord read_metrics(const std::string& path);

void write_text_file(const std::string& path, const std::string& contents);
std::string read_text_file(const std::string& path);

}  // namespace unfold
