#include "sbc/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "sbc/error.hpp"

namespace sbc {

namespace {

std::string trim(std::string s) {
  const auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
  return s;
}

std::vector<std::string> split_fields(const std::string &line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) fields.push_back(trim(f));
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_real(const std::string &field, const std::string &where) {
  double v = 0.0;
  const char *first = field.data();
  const char *last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || !std::isfinite(v))
    throw DataError(where + ": cannot parse '" + field + "' as a real number");
  return v;
}

int parse_int(const std::string &field, const std::string &where) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size())
    throw DataError(where + ": cannot parse '" + field + "' as an integer");
  return v;
}

std::string fmt_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

} // namespace

void validate(const Dataset &data) {
  if (data.kind == DataKind::Grouped) {
    if (!data.pelts.empty()) throw DataError("grouped dataset carries pelt rows");
    if (data.groups < 0) throw DataError("negative group count");
    for (const auto &o : data.grouped) {
      if (o.group < 1 || o.group > data.groups)
        throw DataError("observation group " + std::to_string(o.group) +
                        " outside [1, " + std::to_string(data.groups) + "]");
      if (!std::isfinite(o.value)) throw DataError("non-finite observation");
    }
  } else {
    if (!data.grouped.empty()) throw DataError("pelt dataset carries grouped rows");
    for (const auto &o : data.pelts) {
      if (!(o.hare > 0.0) || !(o.lynx > 0.0) || !std::isfinite(o.hare) ||
          !std::isfinite(o.lynx))
        throw DataError("pelt counts must be positive and finite");
    }
  }
}

Dataset concat(const Dataset &a, const Dataset &b) {
  if (a.kind != b.kind) throw DataError("cannot concatenate datasets of different kinds");
  Dataset out = a;
  if (a.kind == DataKind::PeltSeries) {
    out.pelts.insert(out.pelts.end(), b.pelts.begin(), b.pelts.end());
    return out;
  }
  out.groups = std::max(a.groups, b.groups);
  std::vector<int> next = group_counts(a);
  next.resize(static_cast<std::size_t>(out.groups), 0);
  for (auto o : b.grouped) {
    o.index = ++next[static_cast<std::size_t>(o.group - 1)];
    out.grouped.push_back(o);
  }
  return out;
}

Dataset leading_fraction(const Dataset &data, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw ConfigError("base_data_fraction must lie in (0, 1]");
  const auto keep = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(data.size()) + 1e-9));
  Dataset out = data;
  if (data.kind == DataKind::Grouped)
    out.grouped.resize(keep);
  else
    out.pelts.resize(keep);
  return out;
}

std::vector<int> group_counts(const Dataset &data) {
  std::vector<int> counts(static_cast<std::size_t>(std::max(data.groups, 0)), 0);
  for (const auto &o : data.grouped) {
    if (o.group < 1 || o.group > data.groups) throw DataError("group id out of range");
    ++counts[static_cast<std::size_t>(o.group - 1)];
  }
  return counts;
}

Dataset read_dataset_csv(std::istream &in, const std::string &source) {
  std::string line;
  std::size_t line_no = 0;
  // Header (skip leading blank lines).
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  const auto header = split_fields(trim(line));
  Dataset data;
  if (header == std::vector<std::string>{"group", "index", "value"}) {
    data.kind = DataKind::Grouped;
  } else if (header == std::vector<std::string>{"year", "hare_pelts", "lynx_pelts"}) {
    data.kind = DataKind::PeltSeries;
  } else {
    throw DataError(source + ":" + std::to_string(line_no) +
                    ": unrecognised header '" + trim(line) + "'");
  }
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto fields = split_fields(t);
    if (fields.size() != 3)
      throw DataError(where + ": expected 3 fields, found " + std::to_string(fields.size()));
    if (data.kind == DataKind::Grouped) {
      GroupedObservation o{parse_int(fields[0], where), parse_int(fields[1], where),
                           parse_real(fields[2], where)};
      if (o.group < 1) throw DataError(where + ": group ids are 1-based");
      data.groups = std::max(data.groups, o.group);
      data.grouped.push_back(o);
    } else {
      PeltObservation o{parse_real(fields[0], where), parse_real(fields[1], where),
                        parse_real(fields[2], where)};
      if (!(o.hare > 0.0) || !(o.lynx > 0.0))
        throw DataError(where + ": pelt counts must be positive");
      data.pelts.push_back(o);
    }
  }
  validate(data);
  return data;
}

Dataset read_dataset_csv(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path.string());
  return read_dataset_csv(in, path.string());
}

void write_dataset_csv(std::ostream &out, const Dataset &data) {
  if (data.kind == DataKind::Grouped) {
    out << "group,index,value\n";
    for (const auto &o : data.grouped)
      out << o.group << ',' << o.index << ',' << fmt_real(o.value) << '\n';
  } else {
    out << "year,hare_pelts,lynx_pelts\n";
    for (const auto &o : data.pelts)
      out << fmt_real(o.year) << ',' << fmt_real(o.hare) << ',' << fmt_real(o.lynx) << '\n';
  }
}

void write_dataset_csv(const std::filesystem::path &path, const Dataset &data) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset " + path.string());
  write_dataset_csv(out, data);
}

} // namespace sbc
