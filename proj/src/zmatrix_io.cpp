#include "hteqtl/zmatrix_io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>

#include "hteqtl/errors.hpp"
#include "hteqtl/model_io.hpp"

namespace hteqtl {

static_assert(std::endian::native == std::endian::little, "HTZ1 I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'H', 'T', 'Z', '1'};

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().remove_suffix(1);
  return out;
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) | (std::uint32_t{b[3]} << 24);
}

void write_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

}  // namespace

std::filesystem::path tissues_sidecar(const std::filesystem::path& zpath) {
  auto p = zpath;
  p += ".tissues.json";
  return p;
}

ZReader::ZReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw InputError("cannot open " + path.string());
  char magic[4] = {};
  in_.read(magic, 4);
  if (in_.gcount() == 4 && std::memcmp(magic, kMagic, 4) == 0) {
    format_ = ZFormat::Binary;
    total_ = read_u32(in_);
    cols_ = static_cast<int>(read_u32(in_));
    if (!in_ || cols_ < 1) throw InputError(path.string() + ": truncated HTZ1 header");
    return;
  }
  in_.clear();
  in_.seekg(0);
  std::string line;
  if (!std::getline(in_, line)) throw InputError(path.string() + ": empty z-matrix file");
  auto f = split_tabs(line);
  if (f.size() < 2 || f[0] != "pair_id") throw InputError(path.string() + ": header must start with pair_id");
  for (std::size_t i = 1; i < f.size(); ++i) names_.emplace_back(f[i]);
  cols_ = static_cast<int>(names_.size());
}

std::size_t ZReader::next(std::size_t max_rows, std::vector<std::string>& ids, RowMatrix& values) {
  ids.clear();
  if (format_ == ZFormat::Binary) {
    const std::uint64_t remaining = *total_ - row_;
    const std::size_t n = static_cast<std::size_t>(std::min<std::uint64_t>(remaining, max_rows));
    values.resize(static_cast<Eigen::Index>(n), cols_);
    if (n == 0) return 0;
    in_.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * cols_ * sizeof(double)));
    if (!in_) throw InputError(path_.string() + ": truncated HTZ1 payload");
    if (!values.allFinite()) throw InputError(path_.string() + ": non-finite value in HTZ1 payload");
    ids.reserve(n);
    for (std::size_t i = 0; i < n; ++i) ids.push_back(std::to_string(row_ + i));
    row_ += n;
    return n;
  }

  std::vector<double> flat;
  flat.reserve(max_rows * static_cast<std::size_t>(cols_));
  std::string line;
  while (ids.size() < max_rows && std::getline(in_, line)) {
    ++line_no_;
    if (line.empty() || line == "\r") continue;
    auto f = split_tabs(line);
    if (f.size() != static_cast<std::size_t>(cols_) + 1)
      throw InputError(path_.string() + ":" + std::to_string(line_no_) + ": expected " + std::to_string(cols_ + 1) +
                       " fields");
    ids.emplace_back(f[0]);
    for (int c = 0; c < cols_; ++c) {
      double v = 0.0;
      auto s = f[static_cast<std::size_t>(c) + 1];
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
        throw InputError(path_.string() + ":" + std::to_string(line_no_) + ": bad value '" + std::string(s) + "'");
      flat.push_back(v);
    }
  }
  values = Eigen::Map<RowMatrix>(flat.data(), static_cast<Eigen::Index>(ids.size()), cols_);
  row_ += ids.size();
  return ids.size();
}

ZWriter::ZWriter(const std::filesystem::path& path, ZFormat format, const std::vector<std::string>& tissue_names)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc), format_(format),
      cols_(static_cast<int>(tissue_names.size())) {
  if (!out_) throw InputError("cannot write " + path.string());
  if (format_ == ZFormat::Binary) {
    out_.write(kMagic, 4);
    write_u32(out_, 0);
    write_u32(out_, static_cast<std::uint32_t>(cols_));
  } else {
    out_ << "pair_id";
    for (const auto& n : tissue_names) out_ << '\t' << n;
    out_ << '\n';
  }
}

ZWriter::~ZWriter() {
  try {
    close();
  } catch (...) {
  }
}

void ZWriter::write(const std::vector<std::string>& ids, const RowMatrix& values) {
  if (values.cols() != cols_ || static_cast<std::size_t>(values.rows()) != ids.size())
    throw ContractViolation("ZWriter: chunk shape mismatch");
  if (format_ == ZFormat::Binary) {
    out_.write(reinterpret_cast<const char*>(values.data()),
               static_cast<std::streamsize>(values.size() * sizeof(double)));
  } else {
    std::string buf;
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
      buf += ids[static_cast<std::size_t>(r)];
      for (int c = 0; c < cols_; ++c) {
        buf += '\t';
        buf += format_real(values(r, c));
      }
      buf += '\n';
    }
    out_ << buf;
  }
  rows_ += ids.size();
  if (format_ == ZFormat::Binary && rows_ > 0xffffffffull) throw InputError("HTZ1 supports at most 2^32-1 rows");
}

void ZWriter::close() {
  if (closed_) return;
  closed_ = true;
  if (format_ == ZFormat::Binary) {
    out_.seekp(4);
    write_u32(out_, static_cast<std::uint32_t>(rows_));
  }
  out_.flush();
  if (!out_) throw InputError("write failed for " + path_.string());
  out_.close();
}

TissueSet read_tissues_for(const std::filesystem::path& zpath) {
  auto side = tissues_sidecar(zpath);
  if (!std::filesystem::exists(side)) throw InputError("missing tissue sidecar " + side.string());
  return deserialize_tissues(read_text(side));
}

ZMatrix read_zmatrix(const std::filesystem::path& path, const TissueSet* tissues) {
  ZReader reader(path);
  ZMatrix z;
  z.tissues = tissues ? *tissues : read_tissues_for(path);
  if (z.tissues.size() != reader.cols()) throw InputError(path.string() + ": column count differs from tissue set");
  if (reader.format() == ZFormat::Tsv && reader.header_names() != z.tissues.names)
    throw InputError(path.string() + ": header tissue names differ from tissue set");
  std::vector<std::string> ids;
  RowMatrix chunk;
  std::vector<RowMatrix> chunks;
  std::size_t total = 0;
  while (reader.next(1 << 16, ids, chunk) > 0) {
    z.pair_ids.insert(z.pair_ids.end(), ids.begin(), ids.end());
    total += static_cast<std::size_t>(chunk.rows());
    chunks.push_back(std::move(chunk));
  }
  z.values.resize(static_cast<Eigen::Index>(total), reader.cols());
  Eigen::Index at = 0;
  for (auto& c : chunks) {
    z.values.middleRows(at, c.rows()) = c;
    at += c.rows();
  }
  return z;
}

void write_zmatrix(const ZMatrix& z, const std::filesystem::path& path, ZFormat format) {
  {
    ZWriter w(path, format, z.tissues.names);
    w.write(z.pair_ids, z.values);
    w.close();
  }
  write_text(tissues_sidecar(path), serialize_tissues(z.tissues));
}

}  // namespace hteqtl
