#pragma once

// Binary activation dataset ("ASTRM1") with a line-delimited text index.
//
// Data file:
//   header  : "ASTRM1" | u32 format_version | u32 feature_dim | u16 n_layers
//             | n_layers x (u32 layer_index, u32 width)
//   records : u32 id_len | id bytes | u32 T | u32 prompt_end
//             | T role bytes (0 = prompt, 1 = response) | T*feature_dim f32, row-major
// Index file (<data>.idx): one "id<TAB>offset<TAB>label[<TAB>source]" line per
// record in file order; label is written with round-trip precision. Lines
// beginning with '#' are comments.
//
// All integers and floats are little-endian.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "streamprobe/activation.hpp"

namespace streamprobe {

inline constexpr char kDatasetMagic[] = "ASTRM1";
inline constexpr std::uint32_t kDatasetFormatVersion = 1;

struct ManifestEntry {
    std::string id;
    std::uint64_t offset = 0;
    double label = 0.0;
    Source source = Source::imported;
};

struct DatasetManifest {
    std::uint32_t format_version = kDatasetFormatVersion;
    std::size_t feature_dim = 0;
    LayerMap layer_map;
    std::vector<ManifestEntry> entries;
};

std::filesystem::path index_path_for(const std::filesystem::path& data_path);

// Appends records to a new dataset. Single writer; the index is written by
// finish() (or the destructor) through a temporary file and rename.
class DatasetWriter {
public:
    DatasetWriter(const std::filesystem::path& path, LayerMap layers);
    ~DatasetWriter();
    DatasetWriter(const DatasetWriter&) = delete;
    DatasetWriter& operator=(const DatasetWriter&) = delete;

    // Throws DataError when the exchange is invalid, its layer map differs
    // from the dataset's, or its id repeats.
    void append(const LabeledExchange& exchange);
    void finish();

    std::size_t size() const { return entries_.size(); }

private:
    std::filesystem::path path_;
    LayerMap layers_;
    std::size_t feature_dim_;
    std::ofstream out_;
    std::uint64_t offset_ = 0;
    std::vector<ManifestEntry> entries_;
    std::unordered_set<std::string> ids_;
    bool finished_ = false;
};

void write_dataset(const std::filesystem::path& path, std::span<const LabeledExchange> exchanges);

// Random access to the records of a dataset. The header and index are parsed
// on open; records are read on demand with positional reads, so one reader
// may be shared by concurrent threads.
class DatasetReader {
public:
    explicit DatasetReader(const std::filesystem::path& path);
    ~DatasetReader();
    DatasetReader(const DatasetReader&) = delete;
    DatasetReader& operator=(const DatasetReader&) = delete;

    const DatasetManifest& manifest() const { return manifest_; }
    std::size_t size() const { return manifest_.entries.size(); }

    LabeledExchange read(std::size_t index) const;
    std::vector<LabeledExchange> read_all() const;

private:
    std::filesystem::path path_;
    int fd_ = -1;
    std::uint64_t file_size_ = 0;
    DatasetManifest manifest_;
};

std::vector<LabeledExchange> read_dataset(const std::filesystem::path& path);

}  // namespace streamprobe
