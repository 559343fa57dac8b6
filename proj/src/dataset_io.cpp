#include "streamprobe/dataset_io.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <charconv>
#include <cstring>
#include <sstream>

#include "binary_io.hpp"
#include "streamprobe/errors.hpp"

namespace streamprobe {
namespace {

constexpr std::size_t kMagicLen = 6;

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

bool valid_id(const std::string& id) {
    if (id.empty()) return false;
    for (char c : id)
        if (c == '\t' || c == '\n' || c == '\r') return false;
    return true;
}

std::vector<ManifestEntry> parse_index(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("index", "cannot open index file " + path.string());
    std::vector<ManifestEntry> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cols;
        std::size_t start = 0;
        while (true) {
            auto tab = line.find('\t', start);
            cols.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        const std::string where = "line " + std::to_string(lineno);
        if (cols.size() < 3 || cols.size() > 4) throw FormatError("index", where + ": expected 3 or 4 columns");
        ManifestEntry e;
        e.id = cols[0];
        {
            const auto& s = cols[1];
            auto r = std::from_chars(s.data(), s.data() + s.size(), e.offset);
            if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
                throw FormatError("index.offset", where + ": bad offset '" + s + "'");
        }
        {
            const auto& s = cols[2];
            auto r = std::from_chars(s.data(), s.data() + s.size(), e.label);
            if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
                throw FormatError("index.label", where + ": bad label '" + s + "'");
        }
        if (cols.size() == 4) {
            auto src = parse_source(cols[3]);
            if (!src) throw FormatError("index.source", where + ": unknown source '" + cols[3] + "'");
            e.source = *src;
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

}  // namespace

std::filesystem::path index_path_for(const std::filesystem::path& data_path) {
    auto p = data_path;
    p += ".idx";
    return p;
}

DatasetWriter::DatasetWriter(const std::filesystem::path& path, LayerMap layers)
    : path_(path), layers_(std::move(layers)), feature_dim_(total_width(layers_)) {
    if (layers_.empty()) throw DataError("dataset needs at least one layer");
    if (layers_.size() > 0xFFFF) throw DataError("too many layers for the dataset header");
    out_.open(path_, std::ios::binary | std::ios::trunc);
    if (!out_) throw DataError("cannot open " + path_.string() + " for writing");
    detail::ByteWriter w;
    w.put_bytes(std::string_view(kDatasetMagic, kMagicLen));
    w.put<std::uint32_t>(kDatasetFormatVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(feature_dim_));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(layers_.size()));
    for (const auto& l : layers_) {
        w.put<std::uint32_t>(l.layer_index);
        w.put<std::uint32_t>(l.width);
    }
    out_.write(reinterpret_cast<const char*>(w.bytes().data()), static_cast<std::streamsize>(w.size()));
    offset_ = w.size();
}

DatasetWriter::~DatasetWriter() {
    try {
        finish();
    } catch (...) {
    }
}

void DatasetWriter::append(const LabeledExchange& ex) {
    if (finished_) throw DataError("append after finish");
    const auto& seq = ex.sequence;
    if (!valid_id(ex.id)) throw DataError("invalid record id '" + ex.id + "'");
    if (ids_.count(ex.id)) throw DataError("duplicate record id '" + ex.id + "'");
    if (!(ex.label >= 0.0 && ex.label <= 1.0)) throw IntegrityError(ex.id, "label outside [0, 1]");
    if (seq.layer_map != layers_) throw IntegrityError(ex.id, "layer map differs from the dataset header");
    auto report = validate_sequence(seq);
    if (!report.ok()) throw IntegrityError(ex.id, report.summary());

    detail::ByteWriter w;
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ex.id.size()));
    w.put_bytes(ex.id);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(seq.n_tokens));
    w.put<std::uint32_t>(seq.prompt_end);
    for (auto r : seq.roles) w.put<std::uint8_t>(static_cast<std::uint8_t>(r));
    w.put_array(std::span<const float>(seq.features));
    out_.write(reinterpret_cast<const char*>(w.bytes().data()), static_cast<std::streamsize>(w.size()));
    if (!out_) throw DataError("write failed on " + path_.string());

    entries_.push_back({ex.id, offset_, ex.label, ex.source});
    ids_.insert(ex.id);
    offset_ += w.size();
}

void DatasetWriter::finish() {
    if (finished_) return;
    finished_ = true;
    out_.close();
    if (!out_) throw DataError("failed to close " + path_.string());
    const auto idx = index_path_for(path_);
    auto tmp = idx;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
        out << "# astrm index v" << kDatasetFormatVersion << ": id offset label source\n";
        for (const auto& e : entries_)
            out << e.id << '\t' << e.offset << '\t' << format_double(e.label) << '\t' << to_string(e.source) << '\n';
        if (!out) throw DataError("write failed on " + tmp.string());
    }
    std::filesystem::rename(tmp, idx);
}

void write_dataset(const std::filesystem::path& path, std::span<const LabeledExchange> exchanges) {
    if (exchanges.empty()) throw DataError("cannot write an empty dataset");
    DatasetWriter writer(path, exchanges.front().sequence.layer_map);
    for (const auto& ex : exchanges) writer.append(ex);
    writer.finish();
}

DatasetReader::DatasetReader(const std::filesystem::path& path) : path_(path) {
    fd_ = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
    if (fd_ < 0) throw DataError("cannot open " + path.string() + ": " + std::strerror(errno));
    struct stat st {};
    if (::fstat(fd_, &st) != 0) {
        ::close(fd_);
        throw DataError("cannot stat " + path.string());
    }
    file_size_ = static_cast<std::uint64_t>(st.st_size);

    try {
        std::vector<unsigned char> head(std::min<std::uint64_t>(file_size_, kMagicLen + 4 + 4 + 2));
        if (::pread(fd_, head.data(), head.size(), 0) != static_cast<ssize_t>(head.size()))
            throw FormatError("magic", "short read");
        detail::ByteReader r(head);
        if (r.get_string(kMagicLen) != std::string_view(kDatasetMagic, kMagicLen) || !r.ok())
            throw FormatError("magic", "expected \"ASTRM1\"");
        manifest_.format_version = r.get<std::uint32_t>();
        if (!r.ok()) throw FormatError("format_version", "header truncated");
        if (manifest_.format_version != kDatasetFormatVersion)
            throw FormatError("format_version", "unsupported version " + std::to_string(manifest_.format_version));
        manifest_.feature_dim = r.get<std::uint32_t>();
        if (!r.ok()) throw FormatError("feature_dim", "header truncated");
        const auto n_layers = r.get<std::uint16_t>();
        if (!r.ok()) throw FormatError("n_layers", "header truncated");
        if (n_layers == 0) throw FormatError("n_layers", "no layers declared");

        std::vector<unsigned char> layer_bytes(std::size_t{n_layers} * 8);
        const auto layer_off = static_cast<off_t>(head.size());
        if (::pread(fd_, layer_bytes.data(), layer_bytes.size(), layer_off) != static_cast<ssize_t>(layer_bytes.size()))
            throw FormatError("layer_map", "header truncated");
        detail::ByteReader lr(layer_bytes);
        for (std::uint16_t i = 0; i < n_layers; ++i) {
            LayerSpec l;
            l.layer_index = lr.get<std::uint32_t>();
            l.width = lr.get<std::uint32_t>();
            manifest_.layer_map.push_back(l);
        }
        if (total_width(manifest_.layer_map) != manifest_.feature_dim)
            throw FormatError("feature_dim", "does not equal the sum of layer widths");
        const std::uint64_t header_size = head.size() + layer_bytes.size();

        manifest_.entries = parse_index(index_path_for(path));
        std::unordered_set<std::string> ids;
        std::uint64_t prev = 0;
        for (std::size_t i = 0; i < manifest_.entries.size(); ++i) {
            const auto& e = manifest_.entries[i];
            if (!ids.insert(e.id).second) throw FormatError("index.id", "duplicate id '" + e.id + "'");
            if (i == 0 && e.offset != header_size)
                throw FormatError("index.offset", "first record must start right after the header");
            if (i > 0 && e.offset <= prev) throw FormatError("index.offset", "offsets must be strictly increasing");
            if (e.offset >= file_size_) throw IntegrityError(e.id, "offset beyond end of file");
            if (!(e.label >= 0.0 && e.label <= 1.0)) throw IntegrityError(e.id, "label outside [0, 1]");
            prev = e.offset;
        }
    } catch (...) {
        ::close(fd_);
        throw;
    }
}

DatasetReader::~DatasetReader() {
    if (fd_ >= 0) ::close(fd_);
}

LabeledExchange DatasetReader::read(std::size_t index) const {
    const auto& e = manifest_.entries.at(index);
    const std::uint64_t end =
        index + 1 < manifest_.entries.size() ? manifest_.entries[index + 1].offset : file_size_;
    std::vector<unsigned char> buf(end - e.offset);
    if (::pread(fd_, buf.data(), buf.size(), static_cast<off_t>(e.offset)) != static_cast<ssize_t>(buf.size()))
        throw IntegrityError(e.id, "short read");

    detail::ByteReader r(buf);
    const auto id_len = r.get<std::uint32_t>();
    if (!r.ok() || id_len > r.remaining()) throw IntegrityError(e.id, "record truncated in id");
    const auto id = r.get_string(id_len);
    if (id != e.id) throw IntegrityError(e.id, "record id '" + id + "' does not match the index");

    LabeledExchange ex;
    ex.id = id;
    ex.label = e.label;
    ex.source = e.source;
    auto& seq = ex.sequence;
    seq.layer_map = manifest_.layer_map;
    seq.feature_dim = manifest_.feature_dim;
    const auto n_tokens = r.get<std::uint32_t>();
    seq.prompt_end = r.get<std::uint32_t>();
    if (!r.ok()) throw IntegrityError(e.id, "record truncated in token header");
    seq.n_tokens = n_tokens;

    const std::uint64_t expected = std::uint64_t{n_tokens} + std::uint64_t{n_tokens} * seq.feature_dim * 4;
    if (r.remaining() != expected) {
        std::ostringstream msg;
        msg << "record body is " << r.remaining() << " bytes but " << n_tokens << " tokens x " << seq.feature_dim
            << " features need " << expected;
        if (seq.feature_dim > 0 && n_tokens > 0 && r.remaining() > n_tokens &&
            (r.remaining() - n_tokens) % (std::uint64_t{n_tokens} * 4) == 0)
            msg << " (record has " << (r.remaining() - n_tokens) / (std::uint64_t{n_tokens} * 4) << " columns)";
        throw IntegrityError(e.id, msg.str());
    }
    seq.roles.resize(n_tokens);
    for (auto& role : seq.roles) {
        const auto b = r.get<std::uint8_t>();
        if (b > 1) throw IntegrityError(e.id, "role byte " + std::to_string(b) + " is neither 0 nor 1");
        role = static_cast<Role>(b);
    }
    seq.features.resize(std::size_t{n_tokens} * seq.feature_dim);
    if (!r.get_array(std::span<float>(seq.features))) throw IntegrityError(e.id, "record truncated in features");
    const auto report = validate_sequence(seq);
    if (!report.ok()) throw IntegrityError(e.id, report.summary());
    return ex;
}

std::vector<LabeledExchange> DatasetReader::read_all() const {
    std::vector<LabeledExchange> out;
    out.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) out.push_back(read(i));
    return out;
}

std::vector<LabeledExchange> read_dataset(const std::filesystem::path& path) {
    return DatasetReader(path).read_all();
}

}  // namespace streamprobe
