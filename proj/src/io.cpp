#include "ugnn/io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ugnn {

namespace {

[[noreturn]] void file_error(const std::string& path, std::size_t line,
                             const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

bool blank_or_comment(const std::string& s) {
  for (char c : s) {
    if (c == '#') return true;
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

long parse_long(const std::string& tok, const std::string& path,
                std::size_t line) {
  char* end = nullptr;
  errno = 0;
  const long v = std::strtol(tok.c_str(), &end, 10);
  if (errno != 0 || end == tok.c_str() || *end != '\0')
    file_error(path, line, "expected integer, got '" + tok + "'");
  return v;
}

double parse_double(const std::string& tok, const std::string& path,
                    std::size_t line) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0')
    file_error(path, line, "expected number, got '" + tok + "'");
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::string format_real(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<Triplet> load_triplet_file(const std::string& path) {
  std::ifstream in = open_or_throw(path);
  std::vector<Triplet> out;
  std::string line;
  std::size_t ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    if (blank_or_comment(line)) continue;
    const auto toks = split(line, '\t');
    if (toks.size() != 3)
      file_error(path, ln, "expected src<TAB>rel<TAB>dst");
    const long s = parse_long(toks[0], path, ln);
    const long r = parse_long(toks[1], path, ln);
    const long d = parse_long(toks[2], path, ln);
    if (s < 0 || r < 0 || d < 0) file_error(path, ln, "negative index");
    out.push_back(Triplet{static_cast<NodeId>(s), static_cast<RelationId>(r),
                          static_cast<NodeId>(d)});
  }
  return out;
}

Matrix load_csv_matrix(const std::string& path) {
  std::ifstream in = open_or_throw(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    if (blank_or_comment(line)) continue;
    const auto toks = split(line, ',');
    std::vector<double> row;
    row.reserve(toks.size());
    for (const auto& t : toks) row.push_back(parse_double(t, path, ln));
    if (!rows.empty() && row.size() != rows.front().size())
      file_error(path, ln, "inconsistent column count");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error(path + ": empty matrix");
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i].begin(), rows[i].end(), m.row(i));
  return m;
}

LabelSet load_labels(const std::string& path, std::size_t n) {
  std::ifstream in = open_or_throw(path);
  LabelSet ls;
  ls.class_of.assign(n, -1);
  ls.observed.assign(n, 0);
  std::string line;
  std::size_t ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    if (blank_or_comment(line)) continue;
    const auto toks = split(line, ',');
    if (toks.size() != 2) file_error(path, ln, "expected node_id,class_id");
    const long v = parse_long(toks[0], path, ln);
    const long c = parse_long(toks[1], path, ln);
    if (v < 0 || static_cast<std::size_t>(v) >= n)
      file_error(path, ln, "node id out of range");
    if (c < 0) file_error(path, ln, "negative class id");
    if (ls.observed[static_cast<std::size_t>(v)])
      file_error(path, ln, "duplicate label for node " + toks[0]);
    ls.class_of[static_cast<std::size_t>(v)] = c;
    ls.observed[static_cast<std::size_t>(v)] = 1;
  }
  return ls;
}

std::vector<Split> load_splits(const std::string& path, std::size_t n) {
  std::ifstream in = open_or_throw(path);
  std::vector<Split> out(n, Split::None);
  std::string line;
  std::size_t ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    if (blank_or_comment(line)) continue;
    const auto toks = split(line, ',');
    if (toks.size() != 2) file_error(path, ln, "expected node_id,split");
    const long v = parse_long(toks[0], path, ln);
    if (v < 0 || static_cast<std::size_t>(v) >= n)
      file_error(path, ln, "node id out of range");
    Split s;
    if (toks[1] == "train")
      s = Split::Train;
    else if (toks[1] == "val")
      s = Split::Val;
    else if (toks[1] == "test")
      s = Split::Test;
    else
      file_error(path, ln, "unknown split '" + toks[1] + "'");
    out[static_cast<std::size_t>(v)] = s;
  }
  return out;
}

void atomic_write_file(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out.write(content.data(),
              static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("short write on " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace ugnn
