#ifndef STREAMGDA_STREAM_IO_HPP
#define STREAMGDA_STREAM_IO_HPP

#include "streamgda/gda_state.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace streamgda {

// EMBSTRM1 container. All integers and floats are little-endian.
//
//   offset size
//   0      8    magic "EMBSTRM1"
//   8      4    version (u32, currently 1)
//   12     4    d (u32)
//   16     4    K (u32)
//   20     8    record_count (u64, 0 = unknown/streaming)
//   28     4    flags (u32; bit 0 labels present, bit 1 features pre-normalized)
//   32     4*K*d text embeddings, f32 row-major
//   then per record: d x f32 feature, and an i32 label (-1 = unlabeled) when
//   bit 0 of flags is set.
inline constexpr std::array<char, 8> kEmbeddingMagic{'E', 'M', 'B', 'S', 'T', 'R', 'M', '1'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;
inline constexpr std::size_t kEmbeddingHeaderSize = 32;

inline constexpr std::uint32_t kFlagLabels = 1u << 0;
inline constexpr std::uint32_t kFlagNormalized = 1u << 1;

struct EmbeddingFileHeader {
    std::uint32_t version = kEmbeddingVersion;
    std::uint32_t dim = 0;
    std::uint32_t num_classes = 0;
    std::uint64_t record_count = 0;
    std::uint32_t flags = 0;

    bool has_labels() const { return (flags & kFlagLabels) != 0; }
    std::size_t record_size() const { return 4u * dim + (has_labels() ? 4u : 0u); }
};

// Throws InvalidInput when the text embeddings or any record disagree with the
// header's d and K, or a label is out of range.
void write_embedding_file(std::ostream& out, const EmbeddingFileHeader& header,
                          const ClassTextEmbeddings& text, const std::vector<EmbeddingRecord>& records);

std::vector<char> encode_embedding_file(const EmbeddingFileHeader& header, const ClassTextEmbeddings& text,
                                        const std::vector<EmbeddingRecord>& records);

// Single-pass reader. The header and text embeddings are read on
// construction; records are pulled one at a time in file order.
class EmbeddingReader {
public:
    // Throws FormatError on bad magic/version/flags or a stream that ends
    // before the text embeddings are complete.
    explicit EmbeddingReader(std::istream& in);

    const EmbeddingFileHeader& header() const { return header_; }
    const ClassTextEmbeddings& text() const { return text_; }

    // Next record, or nullopt at a clean end of stream. A partial record, or
    // fewer records than a non-zero record_count announced, raises
    // TruncatedError carrying the record index.
    std::optional<EmbeddingRecord> next();

    std::uint64_t records_read() const { return index_; }

private:
    std::istream& in_;
    EmbeddingFileHeader header_;
    ClassTextEmbeddings text_;
    std::uint64_t index_ = 0;
    std::vector<char> buffer_;
};

// Checkpoint container "GDACKPT1": header (magic, version, d, K, flags) then
// every MixtureState field in double precision, including the cached factor
// when present.
inline constexpr std::array<char, 8> kCheckpointMagic{'G', 'D', 'A', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void checkpoint_state(std::ostream& out, const MixtureState& state);
std::vector<char> checkpoint_bytes(const MixtureState& state);

// Throws FormatError on bad magic, version mismatch, or truncation.
MixtureState restore_state(std::istream& in);
MixtureState restore_state_bytes(const std::vector<char>& bytes);

// Generator for synthetic shifted-mixture streams.
struct SyntheticSpec {
    Matrix class_means;        // K x d
    Matrix shared_covariance;  // d x d, SPD
    Vector class_proportions;  // K, sums to one
    double text_embedding_noise = 0.0;
    std::uint64_t num_samples = 0;
    std::uint64_t seed = 0;
};

struct SyntheticData {
    ClassTextEmbeddings text;
    std::vector<EmbeddingRecord> records;
};

// Deterministic on every platform with a conforming std::mt19937_64:
//  1. text row y = normalize(mu_y + noise * z), z ~ N(0, I_d),
//     rows drawn in class order;
//  2. per sample, class = first y with u < cumsum(proportions)_y, u uniform
//     on [0, 1), then feature = mu_y + L z with L the Cholesky factor of the
//     covariance.
// Normal deviates use the Marsaglia polar method over 53-bit uniforms.
// Throws InvalidInput when the covariance is not SPD or the proportions are
// not a distribution.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

// Random shift scenario: K true means at random directions scaled to
// `separation`, isotropic covariance noise_variance * I, uniform proportions.
SyntheticSpec make_shift_scenario(Index num_classes, Index dim, double separation, double noise_variance,
                                  double text_embedding_noise, std::uint64_t num_samples, std::uint64_t seed);

// Deterministic normal deviates (Marsaglia polar) over mt19937_64.
class NormalSource {
public:
    explicit NormalSource(std::uint64_t seed) : engine_(seed) {}
    double uniform();
    double normal();

private:
    std::mt19937_64 engine_;
    std::optional<double> spare_;
};

}  // namespace streamgda

#endif  // STREAMGDA_STREAM_IO_HPP
