#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace sbc {

enum class DataKind {
  Grouped,    ///< `group,index,value` rows (hierarchical and conjugate models)
  PeltSeries, ///< `year,hare_pelts,lynx_pelts` rows (predator-prey model)
};

struct GroupedObservation {
  int group = 1; // 1-based
  int index = 1; // 1-based position within the group
  double value = 0.0;
};

struct PeltObservation {
  double year = 0.0;
  double hare = 0.0;
  double lynx = 0.0;
};

/// Ordered observations plus shape metadata. Plain value type.
struct Dataset {
  DataKind kind = DataKind::Grouped;
  int groups = 0; ///< J; for grouped data every row has group in [1, J]
  std::vector<GroupedObservation> grouped;
  std::vector<PeltObservation> pelts;

  std::size_t size() const {
    return kind == DataKind::Grouped ? grouped.size() : pelts.size();
  }
  bool empty() const { return size() == 0; }

  static Dataset empty_of(DataKind kind, int groups = 0) {
    Dataset d;
    d.kind = kind;
    d.groups = groups;
    return d;
  }
};

/// Throws DataError when the metadata disagrees with the rows.
void validate(const Dataset &data);

/// Appends `b` after `a`. Grouped rows from `b` are re-indexed so that
/// per-group indices stay contiguous.
Dataset concat(const Dataset &a, const Dataset &b);

/// The first floor(fraction * size) observations.
Dataset leading_fraction(const Dataset &data, double fraction);

/// Per-group observation counts, index j-1 for group j.
std::vector<int> group_counts(const Dataset &data);

Dataset read_dataset_csv(std::istream &in, const std::string &source = "<stream>");
Dataset read_dataset_csv(const std::filesystem::path &path);
void write_dataset_csv(std::ostream &out, const Dataset &data);
void write_dataset_csv(const std::filesystem::path &path, const Dataset &data);

} // namespace sbc
