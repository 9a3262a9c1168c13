#include "mdgc/csv.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>

#include "mdgc/error.hpp"

namespace mdgc {

namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_num(const std::string& s, const std::string& where) {
  try {
    size_t pos = 0;
    const double x = std::stod(s, &pos);
    while (pos < s.size() && std::isspace((unsigned char)s[pos])) ++pos;
    if (pos != s.size()) throw std::invalid_argument(s);
    return x;
  } catch (const std::exception&) {
    throw ParseError(where + ": cannot parse number '" + s + "'");
  }
}

int parse_int(const std::string& s, const std::string& where) {
  const double x = parse_num(s, where);
  const int i = (int)x;
  if ((double)i != x) throw ParseError(where + ": expected integer, got '" + s + "'");
  return i;
}

} // namespace

Dataset read_dataset_csv(const std::string& path, int nv, int channels) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path + "'");
  if (nv < 1) throw ConfigInvalid("dataset: vertex count must be positive");
  size_t want = channels >= 1 ? (size_t)nv * channels : 0;
  Dataset data;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const std::string where = path + ":" + std::to_string(lineno);
    const auto cells = split_commas(line);
    if (channels < 1) { // take the channel count from the first sample row
      if (cells.size() < 2 + (size_t)nv || (cells.size() - 2) % nv != 0)
        throw ParseError(where + ": row width " + std::to_string(cells.size()) +
                         " does not fit a whole number of channels for " +
                         std::to_string(nv) + " vertices");
      channels = (int)((cells.size() - 2) / nv);
      want = (size_t)nv * channels;
    }
    if (cells.size() != want + 2)
      throw ParseError(where + ": expected " + std::to_string(want + 2) +
                       " columns (split,label," + std::to_string(want) +
                       " values), got " + std::to_string(cells.size()));
    const int split = parse_int(cells[0], where);
    if (split != 0 && split != 1)
      throw ParseError(where + ": split flag must be 0 (train) or 1 (validation)");
    const int label = parse_int(cells[1], where);
    if (label < 0) throw ParseError(where + ": label must be non-negative");
    Signal x = Signal::zeros(nv, channels);
    for (size_t k = 0; k < want; ++k) x.a[k] = parse_num(cells[k + 2], where);
    data.split.push_back(split);
    data.ys.push_back(label);
    data.xs.push_back(std::move(x));
  }
  if (data.xs.empty()) throw ParseError(path + ": no samples");
  return data;
}

void write_dataset_csv(const Dataset& data, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  char buf[32];
  for (size_t k = 0; k < data.xs.size(); ++k) {
    f << data.split[k] << ',' << data.ys[k];
    for (double x : data.xs[k].a) {
      std::snprintf(buf, sizeof buf, "%.17g", x);
      f << ',' << buf;
    }
    f << '\n';
  }
  if (!f) throw IoError("failed writing '" + path + "'");
}

Signal read_signal_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const std::string where = path + ":" + std::to_string(lineno);
    const auto cells = split_commas(line);
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_num(c, where));
    if (!rows.empty() && rows[0].size() != row.size())
      throw ParseError(where + ": ragged row");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(path + ": no rows");
  Signal s = Signal::zeros((int)rows.size(), (int)rows[0].size());
  for (size_t v = 0; v < rows.size(); ++v)
    for (size_t c = 0; c < rows[v].size(); ++c) s.at((int)v, (int)c) = rows[v][c];
  return s;
}

void write_signal_csv(const Signal& s, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  char buf[32];
  for (int v = 0; v < s.nv; ++v) {
    for (int c = 0; c < s.ch; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", s.at(v, c));
      f << (c ? "," : "") << buf;
    }
    f << '\n';
  }
  if (!f) throw IoError("failed writing '" + path + "'");
}

} // namespace mdgc
