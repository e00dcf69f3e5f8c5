#include "streamgda/stream_io.hpp"

#include "streamgda/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

namespace streamgda {

namespace {

class ByteWriter {
public:
    explicit ByteWriter(std::vector<char>& out) : out_(out) {}

    void bytes(const char* data, std::size_t n) { out_.insert(out_.end(), data, data + n); }

    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
    }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

private:
    std::vector<char>& out_;
};

std::uint32_t load_u32(const char* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
}

std::uint64_t load_u64(const char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
}

float load_f32(const char* p) { return std::bit_cast<float>(load_u32(p)); }
double load_f64(const char* p) { return std::bit_cast<double>(load_u64(p)); }

// Reads exactly n bytes; returns the number actually read.
std::size_t read_bytes(std::istream& in, char* dst, std::size_t n) {
    in.read(dst, static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(in.gcount());
}

// Cursor over an in-memory checkpoint; any short read is a FormatError.
class ByteReader {
public:
    explicit ByteReader(std::istream& in) : in_(in) {}

    void bytes(char* dst, std::size_t n) {
        if (read_bytes(in_, dst, n) != n) throw FormatError("checkpoint is truncated");
    }
    std::uint32_t u32() {
        char b[4];
        bytes(b, 4);
        return load_u32(b);
    }
    std::uint64_t u64() {
        char b[8];
        bytes(b, 8);
        return load_u64(b);
    }
    double f64() {
        char b[8];
        bytes(b, 8);
        return load_f64(b);
    }
    void f64_block(double* dst, std::size_t count) {
        std::vector<char> raw(count * 8);
        bytes(raw.data(), raw.size());
        for (std::size_t i = 0; i < count; ++i) dst[i] = load_f64(raw.data() + 8 * i);
    }

private:
    std::istream& in_;
};

// Row-major f64 block of a K x d (or d x d) matrix.
void write_matrix_f64(ByteWriter& w, const Matrix& m) {
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) w.f64(m(r, c));
}

Matrix read_matrix_f64(ByteReader& r, Index rows, Index cols) {
    std::vector<double> flat(static_cast<std::size_t>(rows * cols));
    r.f64_block(flat.data(), flat.size());
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = flat[static_cast<std::size_t>(i * cols + j)];
    return m;
}

constexpr std::uint32_t kCheckpointHasFactor = 1u << 0;
constexpr std::uint32_t kCheckpointReuseStale = 1u << 1;

}  // namespace

std::vector<char> encode_embedding_file(const EmbeddingFileHeader& header, const ClassTextEmbeddings& text,
                                        const std::vector<EmbeddingRecord>& records) {
    if (header.dim < 1) throw InvalidInput("header dimension must be >= 1");
    if (header.num_classes < 2) throw InvalidInput("header must declare at least two classes");
    if (text.dim() != static_cast<Index>(header.dim) || text.num_classes() != static_cast<Index>(header.num_classes)) {
        throw InvalidInput("text embeddings do not match the header's d and K");
    }
    if (header.record_count != 0 && header.record_count != records.size()) {
        throw InvalidInput("header record_count disagrees with the number of records");
    }
    if ((header.flags & ~(kFlagLabels | kFlagNormalized)) != 0) throw InvalidInput("unknown header flags");

    std::vector<char> out;
    out.reserve(kEmbeddingHeaderSize + 4 * text.embeddings.size() + records.size() * header.record_size());
    ByteWriter w(out);
    w.bytes(kEmbeddingMagic.data(), kEmbeddingMagic.size());
    w.u32(header.version);
    w.u32(header.dim);
    w.u32(header.num_classes);
    w.u64(header.record_count);
    w.u32(header.flags);

    for (Index y = 0; y < text.num_classes(); ++y)
        for (Index j = 0; j < text.dim(); ++j) w.f32(static_cast<float>(text.embeddings(y, j)));

    for (std::size_t i = 0; i < records.size(); ++i) {
        const EmbeddingRecord& rec = records[i];
        if (rec.feature.size() != static_cast<Index>(header.dim)) {
            throw InvalidInput("record " + std::to_string(i) + " has the wrong dimension");
        }
        for (Index j = 0; j < rec.feature.size(); ++j) w.f32(static_cast<float>(rec.feature[j]));
        if (header.has_labels()) {
            const int label = rec.label.value_or(-1);
            if (label < -1 || label >= static_cast<int>(header.num_classes)) {
                throw InvalidInput("record " + std::to_string(i) + " has an out-of-range label");
            }
            w.i32(label);
        }
    }
    return out;
}

void write_embedding_file(std::ostream& out, const EmbeddingFileHeader& header, const ClassTextEmbeddings& text,
                          const std::vector<EmbeddingRecord>& records) {
    const std::vector<char> bytes = encode_embedding_file(header, text, records);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

EmbeddingReader::EmbeddingReader(std::istream& in) : in_(in) {
    char raw[kEmbeddingHeaderSize];
    if (read_bytes(in_, raw, sizeof raw) != sizeof raw) throw FormatError("embedding stream header is truncated");
    if (std::memcmp(raw, kEmbeddingMagic.data(), kEmbeddingMagic.size()) != 0) {
        throw FormatError("bad magic: not an EMBSTRM1 stream");
    }
    header_.version = load_u32(raw + 8);
    header_.dim = load_u32(raw + 12);
    header_.num_classes = load_u32(raw + 16);
    header_.record_count = load_u64(raw + 20);
    header_.flags = load_u32(raw + 28);

    if (header_.version != kEmbeddingVersion) {
        throw FormatError("unsupported EMBSTRM1 version " + std::to_string(header_.version));
    }
    if (header_.dim < 1) throw FormatError("header dimension must be >= 1");
    if (header_.num_classes < 2) throw FormatError("header must declare at least two classes");
    if ((header_.flags & ~(kFlagLabels | kFlagNormalized)) != 0) throw FormatError("unknown header flags");

    const Index k = header_.num_classes;
    const Index d = header_.dim;
    std::vector<char> block(static_cast<std::size_t>(4 * k * d));
    if (read_bytes(in_, block.data(), block.size()) != block.size()) {
        throw FormatError("embedding stream ends inside the text embeddings");
    }
    text_.embeddings.resize(k, d);
    for (Index y = 0; y < k; ++y)
        for (Index j = 0; j < d; ++j)
            text_.embeddings(y, j) = load_f32(block.data() + 4 * static_cast<std::size_t>(y * d + j));
    text_.class_names.reserve(static_cast<std::size_t>(k));
    for (Index y = 0; y < k; ++y) text_.class_names.push_back("class_" + std::to_string(y));

    buffer_.resize(header_.record_size());
}

std::optional<EmbeddingRecord> EmbeddingReader::next() {
    if (header_.record_count != 0 && index_ == header_.record_count) return std::nullopt;

    const std::size_t got = read_bytes(in_, buffer_.data(), buffer_.size());
    if (got == 0) {
        if (header_.record_count != 0) {
            throw TruncatedError(index_, "stream ended before the announced record count");
        }
        return std::nullopt;
    }
    if (got != buffer_.size()) throw TruncatedError(index_, "stream ends mid-record");

    EmbeddingRecord rec;
    rec.feature.resize(header_.dim);
    for (std::uint32_t j = 0; j < header_.dim; ++j) rec.feature[j] = load_f32(buffer_.data() + 4 * j);
    if (header_.has_labels()) {
        const auto label = static_cast<std::int32_t>(load_u32(buffer_.data() + 4 * header_.dim));
        if (label < -1 || label >= static_cast<std::int32_t>(header_.num_classes)) {
            throw FormatError("record " + std::to_string(index_) + " has out-of-range label " +
                              std::to_string(label));
        }
        if (label >= 0) rec.label = label;
    }
    ++index_;
    return rec;
}

std::vector<char> checkpoint_bytes(const MixtureState& state) {
    const Index k = state.num_classes();
    const Index d = state.dim();
    std::vector<char> out;
    ByteWriter w(out);
    w.bytes(kCheckpointMagic.data(), kCheckpointMagic.size());
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(d));
    w.u32(static_cast<std::uint32_t>(k));
    std::uint32_t flags = 0;
    if (state.factor) flags |= kCheckpointHasFactor;
    if (state.policy.reuse_stale) flags |= kCheckpointReuseStale;
    w.u32(flags);

    w.f64(state.policy.epsilon);
    w.u32(static_cast<std::uint32_t>(state.policy.refactor_interval));
    w.u32(0);  // reserved
    w.f64(state.weighted_total);
    w.f64(state.covariance_prior_weight);
    w.u64(state.updates_since_refactor);

    write_matrix_f64(w, state.means);
    for (Index y = 0; y < k; ++y) w.f64(state.soft_counts[y]);
    for (Index y = 0; y < k; ++y) w.f64(state.priors[y]);
    write_matrix_f64(w, state.covariance);
    if (state.factor) {
        w.f64(state.factor->ridge());
        write_matrix_f64(w, state.factor->lower());
    }
    return out;
}

void checkpoint_state(std::ostream& out, const MixtureState& state) {
    const std::vector<char> bytes = checkpoint_bytes(state);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

MixtureState restore_state(std::istream& in) {
    ByteReader r(in);
    std::array<char, 8> magic{};
    r.bytes(magic.data(), magic.size());
    if (magic != kCheckpointMagic) throw FormatError("bad magic: not a GDACKPT1 checkpoint");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
    }
    const Index d = r.u32();
    const Index k = r.u32();
    const std::uint32_t flags = r.u32();
    if (d < 1 || k < 2) throw FormatError("checkpoint declares invalid dimensions");
    if ((flags & ~(kCheckpointHasFactor | kCheckpointReuseStale)) != 0) throw FormatError("unknown checkpoint flags");

    MixtureState state;
    state.policy.epsilon = r.f64();
    state.policy.refactor_interval = static_cast<int>(r.u32());
    r.u32();
    state.policy.reuse_stale = (flags & kCheckpointReuseStale) != 0;
    state.weighted_total = r.f64();
    state.covariance_prior_weight = r.f64();
    state.updates_since_refactor = r.u64();

    state.means = read_matrix_f64(r, k, d);
    state.soft_counts.resize(k);
    r.f64_block(state.soft_counts.data(), static_cast<std::size_t>(k));
    state.priors.resize(k);
    r.f64_block(state.priors.data(), static_cast<std::size_t>(k));
    state.covariance = read_matrix_f64(r, d, d);
    if ((flags & kCheckpointHasFactor) != 0) {
        const double ridge = r.f64();
        Matrix lower = read_matrix_f64(r, d, d);
        try {
            state.factor = std::make_shared<const CovarianceFactor>(CovarianceFactor::from_parts(std::move(lower), ridge));
        } catch (const NumericalBreakdown& e) {
            throw FormatError(std::string("checkpoint factor is corrupt: ") + e.what());
        }
    }
    if (state.policy.refactor_interval < 1) throw FormatError("checkpoint refactor interval must be >= 1");
    return state;
}

MixtureState restore_state_bytes(const std::vector<char>& bytes) {
    std::istringstream in(std::string(bytes.begin(), bytes.end()));
    return restore_state(in);
}

double NormalSource::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double NormalSource::normal() {
    if (spare_) {
        const double v = *spare_;
        spare_.reset();
        return v;
    }
    double u = 0.0;
    double v = 0.0;
    double s = 0.0;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    return u * m;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    const Index k = spec.class_means.rows();
    const Index d = spec.class_means.cols();
    if (k < 2 || d < 1) throw InvalidInput("synthetic spec needs K >= 2 and d >= 1");
    if (!spec.class_means.allFinite()) throw InvalidInput("class means must be finite");
    if (spec.shared_covariance.rows() != d || spec.shared_covariance.cols() != d) {
        throw InvalidInput("covariance must be d x d");
    }
    if (spec.class_proportions.size() != k || (spec.class_proportions.array() < 0.0).any() ||
        std::abs(spec.class_proportions.sum() - 1.0) > 1e-9) {
        throw InvalidInput("class proportions must be a distribution over K classes");
    }
    if (!(spec.text_embedding_noise >= 0.0)) throw InvalidInput("text embedding noise must be >= 0");
    const Matrix& cov = spec.shared_covariance;
    if (!cov.allFinite() || (cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, cov.cwiseAbs().maxCoeff())) {
        throw InvalidInput("covariance must be finite and symmetric");
    }
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success) throw InvalidInput("covariance is not positive definite");
    const Matrix lower = llt.matrixL();

    NormalSource rng(spec.seed);
    SyntheticData data;
    data.text.embeddings.resize(k, d);
    for (Index y = 0; y < k; ++y) {
        Vector row = spec.class_means.row(y).transpose();
        for (Index j = 0; j < d; ++j) row[j] += spec.text_embedding_noise * rng.normal();
        data.text.embeddings.row(y) = unit_normalized(row).transpose();
        data.text.class_names.push_back("class_" + std::to_string(y));
    }

    Vector cumulative(k);
    double acc = 0.0;
    for (Index y = 0; y < k; ++y) cumulative[y] = (acc += spec.class_proportions[y]);

    data.records.reserve(spec.num_samples);
    Vector z(d);
    for (std::uint64_t i = 0; i < spec.num_samples; ++i) {
        const double u = rng.uniform();
        Index cls = k - 1;
        for (Index y = 0; y < k; ++y) {
            if (u < cumulative[y]) {
                cls = y;
                break;
            }
        }
        for (Index j = 0; j < d; ++j) z[j] = rng.normal();
        EmbeddingRecord rec;
        rec.feature = spec.class_means.row(cls).transpose() + lower * z;
        rec.label = static_cast<int>(cls);
        data.records.push_back(std::move(rec));
    }
    return data;
}

SyntheticSpec make_shift_scenario(Index num_classes, Index dim, double separation, double noise_variance,
                                  double text_embedding_noise, std::uint64_t num_samples, std::uint64_t seed) {
    if (num_classes < 2 || dim < 1) throw InvalidInput("scenario needs K >= 2 and d >= 1");
    if (!(noise_variance > 0.0)) throw InvalidInput("noise variance must be > 0");
    SyntheticSpec spec;
    // Means come from an independent stream so that the sample stream of
    // generate_synthetic depends on `seed` alone.
    NormalSource rng(~seed);
    spec.class_means.resize(num_classes, dim);
    for (Index y = 0; y < num_classes; ++y) {
        Vector direction(dim);
        for (Index j = 0; j < dim; ++j) direction[j] = rng.normal();
        spec.class_means.row(y) = separation * unit_normalized(direction).transpose();
    }
    spec.shared_covariance = noise_variance * Matrix::Identity(dim, dim);
    spec.class_proportions = Vector::Constant(num_classes, 1.0 / static_cast<double>(num_classes));
    spec.text_embedding_noise = text_embedding_noise;
    spec.num_samples = num_samples;
    spec.seed = seed;
    return spec;
}

}  // namespace streamgda
