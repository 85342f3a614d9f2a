#include "unfold/data_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace unfold {

namespace fs = std::filesystem;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

std::uint64_t RandomStreams::derive(const std::string& name, std::uint64_t counter) const {
    return splitmix64(splitmix64(seed_ ^ fnv1a(name)) + splitmix64(counter));
}

std::mt19937_64 RandomStreams::stream(const std::string& name, std::uint64_t counter) const {
    std::mt19937_64 rng(derive(name, counter));
    return rng;
}

Matrix gaussian_matrix(Index rows, Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix M(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) M(i, j) = g(rng);
    return M;
}

MeasurementSetup gaussian_measurement(Index m, Index n, std::uint64_t seed, Normalization normalization) {
    if (m < 1 || m >= n) throw InvalidArgument("measurement matrix needs 1 <= m < n");
    auto rng = RandomStreams(seed).stream("matrix");
    MeasurementSetup setup;
    setup.normalization = normalization;
    Matrix A = gaussian_matrix(m, n, rng);
    switch (normalization) {
        case Normalization::scale_inv_sqrt_m:
            A /= std::sqrt(static_cast<double>(m));
            break;
        case Normalization::row_orthonormal: {
            Eigen::HouseholderQR<Matrix> qr(A.transpose());
            Matrix Q = qr.householderQ() * Matrix::Identity(n, m);
            A = Q.transpose();
            break;
        }
        case Normalization::none:
            break;
    }
    setup.A = std::move(A);
    setup.validate();
    return setup;
}

const char* to_string(SignalModel m) { return m == SignalModel::piecewise_constant ? "piecewise_constant" : "k_sparse"; }

SignalModel signal_model_from_string(const std::string& s) {
    if (s == "piecewise_constant") return SignalModel::piecewise_constant;
    if (s == "k_sparse") return SignalModel::k_sparse;
    throw InvalidArgument("unknown signal model '" + s + "'");
}

Matrix form_observations(const Matrix& X, const MeasurementSetup& setup, double noise_std, std::uint64_t seed,
                         const std::string& split) {
    if (X.rows() != setup.n()) throw ShapeError("signals have the wrong dimension for the measurement matrix");
    if (!(noise_std >= 0.0)) throw InvalidArgument("noise_std must be >= 0");
    auto rng = RandomStreams(seed).stream("noise/" + split);
    Matrix Y = setup.A * X;
    if (noise_std > 0.0) Y += noise_std * gaussian_matrix(Y.rows(), Y.cols(), rng);
    return Y;
}

Dataset synth_sparse_dataset(const SynthParams& p, const MeasurementSetup& setup) {
    if (p.n != setup.n()) throw ShapeError("synthetic signal dimension does not match the measurement matrix");
    if (p.k < 1 || p.k > p.n) throw InvalidArgument("sparsity k must satisfy 1 <= k <= n");
    if (p.s < 0) throw InvalidArgument("sample count must be >= 0");
    auto rng = RandomStreams(p.seed).stream("signals/" + p.split);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<Index> idx(static_cast<std::size_t>(p.n));

    Matrix X = Matrix::Zero(p.n, p.s);
    for (Index j = 0; j < p.s; ++j) {
        std::iota(idx.begin(), idx.end(), Index{0});
        // Partial Fisher-Yates: the first k entries are a uniform k-subset.
        for (Index t = 0; t < p.k; ++t) {
            std::uniform_int_distribution<Index> pick(t, p.n - 1);
            std::swap(idx[static_cast<std::size_t>(t)], idx[static_cast<std::size_t>(pick(rng))]);
        }
        Vector c = Vector::Zero(p.n);
        for (Index t = 0; t < p.k; ++t) c[idx[static_cast<std::size_t>(t)]] = g(rng);
        if (p.model == SignalModel::piecewise_constant) {
            for (Index i = 1; i < p.n; ++i) c[i] += c[i - 1];
        }
        const double norm = c.norm();
        if (norm > 0.0) c /= norm;
        X.col(j) = c;
    }

    Dataset d;
    d.X = std::move(X);
    d.Y = form_observations(d.X, setup, p.noise_std, p.seed, p.split);
    d.split = p.split;
    d.provenance = {{"source", "synthetic"},
                    {"model", to_string(p.model)},
                    {"n", std::to_string(p.n)},
                    {"s", std::to_string(p.s)},
                    {"k", std::to_string(p.k)},
                    {"noise_std", format_double(p.noise_std)},
                    {"seed", std::to_string(p.seed)},
                    {"split", p.split}};
    return d;
}

// ---------------------------------------------------------------------------
// Binary helpers

namespace {

class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) { put(v); }
    void u64(std::uint64_t v) { put(v); }
    void f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    std::vector<std::uint8_t>& data() { return buf_; }

private:
    template <class T>
    void put(T v) {
        for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}
    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return b_.size() - pos_; }
    std::uint8_t u8() {
        need(1, "u8");
        return b_[pos_++];
    }
    std::uint32_t u32() { return get<std::uint32_t>("u32"); }
    std::uint64_t u64() { return get<std::uint64_t>("u64"); }
    double f64() { return std::bit_cast<double>(get<std::uint64_t>("f64")); }
    std::string str(const char* what) {
        const std::uint32_t len = u32();
        need(len, what);
        std::string s(reinterpret_cast<const char*>(b_.data() + pos_), len);
        pos_ += len;
        return s;
    }
    void magic(const char* m) {
        const std::size_t start = pos_;
        need(4, "magic bytes");
        if (std::memcmp(b_.data() + pos_, m, 4) != 0) {
            throw FormatError(std::string("bad magic bytes, expected '") + m + "'", start);
        }
        pos_ += 4;
    }
    void need(std::size_t n, const char* what) const {
        if (remaining() < n) {
            throw FormatError(std::string("truncated input while reading ") + what, pos_);
        }
    }

private:
    template <class T>
    T get(const char* what) {
        need(sizeof(T), what);
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(b_[pos_ + i]) << (8 * i));
        pos_ += sizeof(T);
        return v;
    }
    const std::vector<std::uint8_t>& b_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failure on '" + path + "'");
    return data;
}

void write_binary(const std::string& path, const std::vector<std::uint8_t>& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("write failure on '" + path + "'");
}

constexpr std::uint32_t kTensorVersion = 1;
constexpr std::uint8_t kDtypeF64 = 1;

}  // namespace

void write_tensor(const std::string& path, const Tensor& t) {
    std::uint64_t count = 1;
    for (auto d : t.dims) count *= d;
    if (count != t.data.size()) throw ShapeError("tensor payload does not match its dims");
    Writer w;
    w.bytes("UNFT", 4);
    w.u32(kTensorVersion);
    w.u32(static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) w.u64(d);
    for (double v : t.data) w.f64(v);
    write_binary(path, w.data());
}

Tensor read_tensor(const std::string& path) {
    const auto bytes = read_binary(path);
    Reader r(bytes);
    r.magic("UNFT");
    const std::size_t vpos = r.offset();
    const std::uint32_t version = r.u32();
    if (version != kTensorVersion) {
        throw UnsupportedVersion("tensor file '" + path + "' has version " + std::to_string(version), vpos);
    }
    Tensor t;
    const std::uint32_t rank = r.u32();
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        t.dims.push_back(r.u64());
        count *= t.dims.back();
    }
    r.need(count * 8, "tensor payload");
    t.data.resize(count);
    for (auto& v : t.data) v = r.f64();
    return t;
}

// ---------------------------------------------------------------------------
// Images

namespace {

// Reads the next whitespace-delimited PGM header token, skipping comments.
std::string pgm_token(const std::vector<std::uint8_t>& b, std::size_t& pos, const std::string& path) {
    while (pos < b.size()) {
        if (b[pos] == '#') {
            while (pos < b.size() && b[pos] != '\n') ++pos;
        } else if (std::isspace(b[pos])) {
            ++pos;
        } else {
            break;
        }
    }
    std::string tok;
    while (pos < b.size() && !std::isspace(b[pos]) && b[pos] != '#') tok.push_back(static_cast<char>(b[pos++]));
    if (tok.empty()) throw IoError("malformed PGM header in '" + path + "'");
    return tok;
}

long pgm_number(const std::vector<std::uint8_t>& b, std::size_t& pos, const std::string& path) {
    const std::string tok = pgm_token(b, pos, path);
    char* end = nullptr;
    const long v = std::strtol(tok.c_str(), &end, 10);
    if (*end != '\0' || v < 0) throw IoError("malformed PGM number '" + tok + "' in '" + path + "'");
    return v;
}

bool is_pgm(const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".pgm";
}

}  // namespace

Vector read_pgm(const std::string& path, Index* height, Index* width) {
    std::vector<std::uint8_t> b;
    try {
        b = read_binary(path);
    } catch (const IoError&) {
        throw IoError("cannot read image '" + path + "'");
    }
    std::size_t pos = 0;
    const std::string magic = pgm_token(b, pos, path);
    if (magic != "P5" && magic != "P2") throw IoError("'" + path + "' is not a PGM image (magic " + magic + ")");
    const long w = pgm_number(b, pos, path);
    const long h = pgm_number(b, pos, path);
    const long maxval = pgm_number(b, pos, path);
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) throw IoError("unsupported PGM header in '" + path + "'");
    Vector out(static_cast<Index>(w) * h);
    const double scale = 1.0 / static_cast<double>(maxval);
    auto put = [&](long r, long c, long v) {
        if (v > maxval) throw IoError("PGM sample exceeds maxval in '" + path + "'");
        out[static_cast<Index>(c) * h + r] = static_cast<double>(v) * scale;
    };
    if (magic == "P5") {
        ++pos;  // single whitespace after maxval
        const std::size_t bps = maxval < 256 ? 1 : 2;
        if (b.size() < pos + bps * static_cast<std::size_t>(w * h)) throw IoError("truncated PGM data in '" + path + "'");
        for (long r = 0; r < h; ++r)
            for (long c = 0; c < w; ++c) {
                long v = b[pos];
                if (bps == 2) v = (v << 8) | b[pos + 1];
                pos += bps;
                put(r, c, v);
            }
    } else {
        for (long r = 0; r < h; ++r)
            for (long c = 0; c < w; ++c) put(r, c, pgm_number(b, pos, path));
    }
    if (height) *height = h;
    if (width) *width = w;
    return out;
}

void write_pgm(const std::string& path, const Matrix& pixels) {
    Writer w;
    const std::string header = "P5\n" + std::to_string(pixels.cols()) + " " + std::to_string(pixels.rows()) + "\n255\n";
    w.bytes(header.data(), header.size());
    for (Index r = 0; r < pixels.rows(); ++r)
        for (Index c = 0; c < pixels.cols(); ++c)
            w.u8(static_cast<std::uint8_t>(std::lround(std::clamp(pixels(r, c), 0.0, 1.0) * 255.0)));
    write_binary(path, w.data());
}

Dataset image_ingest(const std::string& path, Index limit, std::uint64_t seed, const MeasurementSetup& setup,
                     double noise_std, const std::string& split) {
    std::vector<Vector> columns;
    std::vector<std::string> sources;
    std::error_code ec;
    if (fs::is_directory(path, ec)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(path)) {
            if (e.is_regular_file() && is_pgm(e.path())) files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) throw IoError("no PGM images found in '" + path + "'");
        Index h0 = -1, w0 = -1;
        for (const auto& f : files) {
            Index h = 0, w = 0;
            columns.push_back(read_pgm(f.string(), &h, &w));
            if (h0 < 0) {
                h0 = h;
                w0 = w;
            } else if (h != h0 || w != w0) {
                throw ShapeError("image '" + f.string() + "' is " + std::to_string(h) + "x" + std::to_string(w) +
                                 ", expected " + std::to_string(h0) + "x" + std::to_string(w0));
            }
            sources.push_back(f.filename().string());
        }
    } else if (!fs::exists(path, ec)) {
        throw IoError("cannot read '" + path + "': no such file or directory");
    } else if (is_pgm(path)) {
        columns.push_back(read_pgm(path));
        sources.push_back(fs::path(path).filename().string());
    } else {
        const Tensor t = read_tensor(path);
        if (t.dims.size() < 2 || t.dims.size() > 3) throw ShapeError("image tensor must have rank 2 or 3");
        const std::uint64_t count = t.dims[0];
        const bool grid = t.dims.size() == 3;
        const std::uint64_t h = t.dims[1];
        const std::uint64_t w = grid ? t.dims[2] : 1;
        for (std::uint64_t i = 0; i < count; ++i) {
            Vector c(static_cast<Index>(h * w));
            // Row-major (i, r, c) payload, vectorized column-major within the image.
            for (std::uint64_t r = 0; r < h; ++r)
                for (std::uint64_t q = 0; q < w; ++q) c[static_cast<Index>(q * h + r)] = t.data[(i * h + r) * w + q];
            columns.push_back(std::move(c));
            sources.push_back(std::to_string(i));
        }
    }

    std::vector<std::size_t> order(columns.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (limit > 0 && static_cast<std::size_t>(limit) < order.size()) {
        auto rng = RandomStreams(seed).stream("ingest");
        std::shuffle(order.begin(), order.end(), rng);
        order.resize(static_cast<std::size_t>(limit));
    }
    const Index n = columns.front().size();
    if (n != setup.n()) {
        throw ShapeError("images have " + std::to_string(n) + " pixels but the measurement matrix expects n=" +
                         std::to_string(setup.n()));
    }
    Dataset d;
    d.X.resize(n, static_cast<Index>(order.size()));
    for (std::size_t j = 0; j < order.size(); ++j) d.X.col(static_cast<Index>(j)) = columns[order[j]];
    d.Y = form_observations(d.X, setup, noise_std, seed, split);
    d.split = split;
    d.provenance = {{"source", "images"},
                    {"path", path},
                    {"count", std::to_string(order.size())},
                    {"limit", std::to_string(limit)},
                    {"seed", std::to_string(seed)},
                    {"noise_std", format_double(noise_std)},
                    {"preprocessing", "grayscale, scaled to [0,1], column-major vectorization"},
                    {"split", split}};
    return d;
}

// ---------------------------------------------------------------------------
// Checkpoints

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void Checkpoint::set(const std::string& key, double value) { config[key] = format_double(value); }
void Checkpoint::set(const std::string& key, std::int64_t value) { config[key] = std::to_string(value); }
void Checkpoint::set(const std::string& key, std::uint64_t value) { config[key] = std::to_string(value); }

const std::string& Checkpoint::get(const std::string& key) const {
    auto it = config.find(key);
    if (it == config.end()) throw FormatError("checkpoint is missing config key '" + key + "'", 0);
    return it->second;
}

double Checkpoint::get_double(const std::string& key) const {
    const std::string& s = get(key);
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') throw FormatError("config key '" + key + "' is not a number", 0);
    return v;
}

std::int64_t Checkpoint::get_int(const std::string& key) const {
    const std::string& s = get(key);
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw FormatError("config key '" + key + "' is not an integer", 0);
    return v;
}

std::uint64_t Checkpoint::get_uint(const std::string& key) const {
    const std::string& s = get(key);
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used);
    if (used != s.size()) throw FormatError("config key '" + key + "' is not an unsigned integer", 0);
    return v;
}

const Matrix& Checkpoint::tensor(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError("checkpoint has no tensor '" + name + "'", 0);
    return it->second;
}

bool Checkpoint::operator==(const Checkpoint& o) const {
    if (version != o.version || config != o.config || tensors.size() != o.tensors.size()) return false;
    auto a = tensors.begin();
    auto b = o.tensors.begin();
    for (; a != tensors.end(); ++a, ++b) {
        if (a->first != b->first || a->second.rows() != b->second.rows() || a->second.cols() != b->second.cols())
            return false;
        if (a->second.size() &&
            std::memcmp(a->second.data(), b->second.data(), sizeof(double) * static_cast<std::size_t>(a->second.size())))
            return false;
    }
    return true;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c) {
    Writer w;
    w.bytes("UNFD", 4);
    w.u32(c.version);
    w.u32(static_cast<std::uint32_t>(c.config.size()));
    for (const auto& [k, v] : c.config) {
        w.str(k);
        w.str(v);
    }
    w.u32(static_cast<std::uint32_t>(c.tensors.size()));
    for (const auto& [name, M] : c.tensors) {
        w.str(name);
        w.u8(kDtypeF64);
        w.u32(2);
        w.u64(static_cast<std::uint64_t>(M.rows()));
        w.u64(static_cast<std::uint64_t>(M.cols()));
        for (Index i = 0; i < M.rows(); ++i)
            for (Index j = 0; j < M.cols(); ++j) w.f64(M(i, j));
    }
    return std::move(w.data());
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    r.magic("UNFD");
    const std::size_t vpos = r.offset();
    Checkpoint c;
    c.version = r.u32();
    if (c.version != Checkpoint::kVersion) {
        throw UnsupportedVersion("checkpoint version " + std::to_string(c.version) + " is not supported (expected " +
                                     std::to_string(Checkpoint::kVersion) + ")",
                                 vpos);
    }
    const std::uint32_t nconf = r.u32();
    for (std::uint32_t i = 0; i < nconf; ++i) {
        std::string k = r.str("config key");
        c.config[k] = r.str("config value");
    }
    const std::uint32_t ntens = r.u32();
    for (std::uint32_t i = 0; i < ntens; ++i) {
        std::string name = r.str("tensor name");
        const std::size_t dpos = r.offset();
        if (r.u8() != kDtypeF64) throw FormatError("tensor '" + name + "' has an unknown dtype tag", dpos);
        const std::size_t rpos = r.offset();
        const std::uint32_t rank = r.u32();
        if (rank != 2) throw FormatError("tensor '" + name + "' has rank " + std::to_string(rank), rpos);
        const std::uint64_t rows = r.u64();
        const std::uint64_t cols = r.u64();
        if (cols != 0 && rows > (r.remaining() / 8) / cols) {
            throw FormatError("truncated input while reading tensor '" + name + "'", r.offset());
        }
        Matrix M(static_cast<Index>(rows), static_cast<Index>(cols));
        for (Index a = 0; a < M.rows(); ++a)
            for (Index b = 0; b < M.cols(); ++b) M(a, b) = r.f64();
        c.tensors[name] = std::move(M);
    }
    if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint payload", r.offset());
    return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) { write_binary(path, serialize_checkpoint(c)); }

Checkpoint load_checkpoint(const std::string& path) { return deserialize_checkpoint(read_binary(path)); }

// ---------------------------------------------------------------------------
// Metrics

namespace {
constexpr const char* kMetricsHeader = "epoch,epsilon,clean_test_mse,adv_test_mse,adv_train_mse,adv_ege";
}

std::string metrics_csv(const MetricsRecord& r) {
    std::string out = std::string(kMetricsHeader) + "\n";
    for (const auto& e : r.rows) {
        out += std::to_string(e.epoch) + "," + format_double(e.epsilon) + "," + format_double(e.clean_test_mse) + "," +
               format_double(e.adv_test_mse) + "," + format_double(e.adv_train_mse) + "," + format_double(e.adv_ege) +
               "\n";
    }
    return out;
}

void write_metrics(const std::string& path, const MetricsRecord& r) { write_text_file(path, metrics_csv(r)); }

MetricsRecord read_metrics(const std::string& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line) || line != kMetricsHeader) throw FormatError("'" + path + "' lacks the metrics header", 0);
    MetricsRecord r;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        EpochMetrics e;
        double* fields[] = {&e.epsilon, &e.clean_test_mse, &e.adv_test_mse, &e.adv_train_mse, &e.adv_ege};
        std::istringstream ls(line);
        std::string tok;
        if (!std::getline(ls, tok, ',')) throw FormatError("empty metrics row", 0);
        e.epoch = std::stoi(tok);
        for (double* f : fields) {
            if (!std::getline(ls, tok, ',')) throw FormatError("short metrics row: " + line, 0);
            *f = std::strtod(tok.c_str(), nullptr);
        }
        r.rows.push_back(e);
    }
    return r;
}

void write_text_file(const std::string& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << contents;
    if (!out) throw IoError("write failure on '" + path + "'");
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace unfold
