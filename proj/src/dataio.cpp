#include "geomm/dataio.hpp"

#include <zlib.h>

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "geomm/error.hpp"
#include "geomm/log.hpp"

namespace geomm {
namespace {

static_assert(std::endian::native == std::endian::little, "model container assumes a little-endian host");

constexpr char kMagic[8] = {'G', 'E', 'O', 'M', 'M', 'M', 'D', 'L'};

std::string_view trim_right(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n' || s.back() == ' ' || s.back() == '\t'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view tok, T& out) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && p == tok.data() + tok.size();
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

std::string at_line(const std::string& path, std::size_t line) {
  return path + ":" + std::to_string(line) + ": ";
}

}  // namespace

Embeddings::Embeddings(std::vector<std::string> vocab, Matrix vectors)
    : vocab_(std::move(vocab)), vectors_(std::move(vectors)) {
  if (static_cast<Index>(vocab_.size()) != vectors_.cols())
    throw DataError("Embeddings: vocabulary size does not match the number of vectors");
  index_.reserve(vocab_.size());
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    if (!index_.emplace(vocab_[i], static_cast<Index>(i)).second)
      throw DataError("Embeddings: duplicate word " + vocab_[i]);
  }
}

std::optional<Index> Embeddings::find(const std::string& word) const {
  auto it = index_.find(word);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Embeddings Embeddings::head(Index n) const {
  if (n <= 0 || n >= size()) return *this;
  return Embeddings(std::vector<std::string>(vocab_.begin(), vocab_.begin() + n), vectors_.leftCols(n));
}

Embeddings load_embeddings(const std::string& path, std::size_t max_vocab) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(at_line(path, 1) + "missing header");
  const auto header = split_ws(trim_right(line));
  long long n_header = 0, d_header = 0;
  if (header.size() != 2 || !parse_number(header[0], n_header) || !parse_number(header[1], d_header) ||
      n_header < 0 || d_header <= 0)
    throw DataError(at_line(path, 1) + "malformed header, expected \"<count> <dim>\"");
  const auto d = static_cast<std::size_t>(d_header);

  std::vector<std::string> vocab;
  std::vector<double> values;
  std::unordered_map<std::string, std::size_t> seen;
  std::size_t line_no = 1;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view row = trim_right(line);
    if (row.empty()) continue;
    ++rows;
    const std::size_t sp = row.find(' ');
    if (sp == std::string_view::npos || sp == 0)
      throw DataError(at_line(path, line_no) + "expected a word followed by " + std::to_string(d) + " values");
    std::string word(row.substr(0, sp));
    const auto toks = split_ws(row.substr(sp + 1));
    if (toks.size() != d) {
      throw DataError(at_line(path, line_no) + "expected " + std::to_string(d) + " values, found " +
                      std::to_string(toks.size()));
    }
    const std::size_t base = values.size();
    values.resize(base + d);
    for (std::size_t k = 0; k < d; ++k) {
      double v = 0.0;
      if (!parse_number(toks[k], v)) throw DataError(at_line(path, line_no) + "unparsable value '" + std::string(toks[k]) + "'");
      if (!std::isfinite(v)) throw DataError(at_line(path, line_no) + "non-finite value");
      values[base + k] = v;
    }
    if (!seen.emplace(word, line_no).second) {
      warn(at_line(path, line_no) + "duplicate word '" + word + "' dropped (first seen on line " +
           std::to_string(seen[word]) + ")");
      values.resize(base);
      continue;
    }
    vocab.push_back(std::move(word));
    if (max_vocab > 0 && vocab.size() >= max_vocab) break;
  }
  if (max_vocab == 0 && rows != static_cast<std::size_t>(n_header)) {
    warn(path + ": header announces " + std::to_string(n_header) + " words but " + std::to_string(rows) +
         " rows were read");
  }
  Matrix m = Eigen::Map<const Matrix>(values.data(), static_cast<Index>(d), static_cast<Index>(vocab.size()));
  return Embeddings(std::move(vocab), std::move(m));
}

std::string_view to_string(Preprocess p) {
  switch (p) {
    case Preprocess::unit: return "unit";
    case Preprocess::unit_center_unit: return "unit_center_unit";
  }
  return "unknown";
}

Preprocess parse_preprocess(std::string_view name) {
  if (name == "unit") return Preprocess::unit;
  if (name == "unit_center_unit") return Preprocess::unit_center_unit;
  throw PreconditionViolation("unknown preprocessing scheme: " + std::string(name));
}

namespace {

// Normalizes columns in place and returns the indices of the non-zero ones.
std::vector<Index> normalize_columns(Matrix& m) {
  std::vector<Index> keep;
  for (Index j = 0; j < m.cols(); ++j) {
    const double n = m.col(j).norm();
    if (n > 0.0) {
      m.col(j) /= n;
      keep.push_back(j);
    }
  }
  return keep;
}

}  // namespace

Embeddings preprocess(const Embeddings& raw, Preprocess scheme) {
  Matrix m = raw.vectors();
  std::vector<Index> keep = normalize_columns(m);
  if (scheme == Preprocess::unit_center_unit && !keep.empty()) {
    Vector mean = Vector::Zero(m.rows());
    for (Index j : keep) mean += m.col(j);
    mean /= static_cast<double>(keep.size());
    for (Index j : keep) m.col(j) -= mean;
    Matrix kept(m.rows(), static_cast<Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) kept.col(static_cast<Index>(k)) = m.col(keep[k]);
    std::vector<Index> second = normalize_columns(kept);
    std::vector<Index> remapped;
    for (Index k : second) remapped.push_back(keep[static_cast<std::size_t>(k)]);
    for (std::size_t k = 0; k < keep.size(); ++k) m.col(keep[k]) = kept.col(static_cast<Index>(k));
    keep = std::move(remapped);
  }
  if (keep.empty()) throw DataError("preprocess: every embedding column is zero");
  if (static_cast<Index>(keep.size()) == raw.size()) return Embeddings(raw.vocab(), std::move(m));
  std::vector<std::string> vocab;
  Matrix out(m.rows(), static_cast<Index>(keep.size()));
  std::size_t next = 0;
  for (Index j = 0; j < raw.size(); ++j) {
    if (next < keep.size() && keep[next] == j) {
      out.col(static_cast<Index>(next)) = m.col(j);
      vocab.push_back(raw.vocab()[static_cast<std::size_t>(j)]);
      ++next;
    } else {
      warn("preprocess: zero vector for '" + raw.vocab()[static_cast<std::size_t>(j)] + "' dropped");
    }
  }
  return Embeddings(std::move(vocab), std::move(out));
}

std::vector<WordPair> dedupe_pairs(const std::vector<WordPair>& pairs) {
  std::set<WordPair> seen;
  std::vector<WordPair> out;
  for (const auto& p : pairs)
    if (seen.insert(p).second) out.push_back(p);
  return out;
}

LoadedDictionary load_dictionary(const std::string& path) {
  std::ifstream in = open_input(path);
  LoadedDictionary d;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto toks = split_ws(trim_right(line));
    if (toks.empty()) continue;
    if (toks.size() != 2) {
      warn(at_line(path, line_no) + "expected 2 tokens, found " + std::to_string(toks.size()) + "; line skipped");
      d.skipped_lines.push_back(line_no);
      continue;
    }
    d.pairs.push_back({std::string(toks[0]), std::string(toks[1])});
  }
  d.pairs = dedupe_pairs(d.pairs);
  return d;
}

void save_dictionary(const std::string& path, const std::vector<WordPair>& pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& p : pairs) out << p.src << '\t' << p.tgt << '\n';
  if (!out) throw DataError("write failed: " + path);
}

std::vector<ScoredPair> load_scored_pairs(const std::string& path) {
  std::ifstream in = open_input(path);
  std::vector<ScoredPair> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto toks = split_ws(trim_right(line));
    if (toks.empty()) continue;
    double score = 0.0;
    if (toks.size() != 3 || !parse_number(toks[2], score) || !std::isfinite(score)) {
      warn(at_line(path, line_no) + "expected \"src tgt score\"; line skipped");
      continue;
    }
    out.push_back({std::string(toks[0]), std::string(toks[1]), score});
  }
  return out;
}

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void matrix(const Matrix& m) {
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) {
        const double v = m(r, c);
        bytes(&v, sizeof v);
      }
  }
  std::vector<unsigned char>& buffer() { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  Reader(const unsigned char* data, std::size_t size) : data_(data), size_(size) {}
  void bytes(void* out, std::size_t n) {
    if (n > size_ - pos_) throw IntegrityError("model file is truncated");
    std::memcpy(out, data_ + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    bytes(&v, sizeof v);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > size_ - pos_) throw IntegrityError("model file is truncated");
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }
  Matrix matrix(Index d) {
    Matrix m(d, d);
    for (Index r = 0; r < d; ++r)
      for (Index c = 0; c < d; ++c) {
        double v = 0.0;
        bytes(&v, sizeof v);
        m(r, c) = v;
      }
    return m;
  }
  std::size_t remaining() const { return size_ - pos_; }

 private:
  const unsigned char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

std::uint32_t checksum(const unsigned char* p, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::vector<unsigned char> serialize_model(const ModelFile& model) {
  const GeommParams& p = model.params;
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(ModelFile::kVersion);
  w.u32(static_cast<std::uint32_t>(p.dim()));
  w.u32(static_cast<std::uint32_t>(p.languages().size()));
  for (const auto& l : p.languages()) w.str(l);
  w.str(std::string(to_string(model.preprocessing)));
  w.str(std::string(to_string(model.variant)));
  for (std::size_t i = 0; i < p.languages().size(); ++i) w.matrix(p.u(i).matrix());
  w.matrix(p.b().matrix());
  const std::uint32_t crc = checksum(w.buffer().data(), w.buffer().size());
  w.u32(crc);
  return std::move(w.buffer());
}

ModelFile deserialize_model(const std::vector<unsigned char>& bytes) {
  constexpr std::size_t kPrefix = sizeof kMagic + sizeof(std::uint32_t);
  if (bytes.size() < kPrefix + sizeof(std::uint32_t)) throw IntegrityError("model file is truncated");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw IntegrityError("not a model file (bad magic)");
  std::uint32_t version = 0;
  std::memcpy(&version, bytes.data() + sizeof kMagic, sizeof version);
  if (version != ModelFile::kVersion) {
    throw IntegrityError("model file version " + std::to_string(version) + " is not supported (expected " +
                         std::to_string(ModelFile::kVersion) + ")");
  }
  const std::size_t body = bytes.size() - sizeof(std::uint32_t);
  std::uint32_t stored = 0;
  std::memcpy(&stored, bytes.data() + body, sizeof stored);
  if (checksum(bytes.data(), body) != stored) throw IntegrityError("model file checksum mismatch (corrupt or truncated)");

  Reader r(bytes.data() + kPrefix, body - kPrefix);
  const std::uint32_t d = r.u32();
  const std::uint32_t n_lang = r.u32();
  if (d == 0) throw IntegrityError("model file declares dimension 0");
  std::vector<std::string> langs;
  for (std::uint32_t i = 0; i < n_lang; ++i) langs.push_back(r.str());
  const Preprocess pre = parse_preprocess(r.str());
  const ModelVariant variant = parse_model_variant(r.str());
  std::vector<OrthPoint> u;
  for (std::uint32_t i = 0; i < n_lang; ++i) u.emplace_back(r.matrix(d));
  SpdPoint b(r.matrix(d));
  if (r.remaining() != 0) throw IntegrityError("model file has trailing bytes");
  return ModelFile{GeommParams(std::move(langs), std::move(u), std::move(b)), pre, variant};
}

void save_model(const std::string& path, const ModelFile& model) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path);
}

ModelFile load_model(const std::string& path) {
  std::ifstream in = open_input(path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace geomm
