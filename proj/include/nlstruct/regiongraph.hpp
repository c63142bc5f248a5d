#pragma once

// Discrete output space: variables, their domains, the regions carrying
// local scores, and the flat slot layout shared by every potential vector.

#include <algorithm>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "nlstruct/core.hpp"

namespace nlstruct {

using Label = std::size_t;

/// One label per variable.
struct Assignment {
  std::vector<Label> labels;

  Assignment() = default;
  explicit Assignment(std::vector<Label> l) : labels(std::move(l)) {}
  Assignment(std::initializer_list<Label> l) : labels(l) {}

  std::size_t size() const { return labels.size(); }
  Label operator[](std::size_t k) const { return labels[k]; }
  Label& operator[](std::size_t k) { return labels[k]; }
  bool operator==(const Assignment&) const = default;
};

/// Length-D real vector over (region, assignment) slots.
class PotentialVector {
public:
  PotentialVector() = default;
  explicit PotentialVector(std::size_t size, double fill = 0.0) : values_(size, fill) {}
  explicit PotentialVector(std::vector<double> values) : values_(std::move(values)) {}

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  std::span<double> span() { return values_; }
  std::span<const double> span() const { return values_; }
  std::vector<double>& raw() { return values_; }
  const std::vector<double>& raw() const { return values_; }
  auto begin() { return values_.begin(); }
  auto end() { return values_.end(); }
  auto begin() const { return values_.begin(); }
  auto end() const { return values_.end(); }
  bool operator==(const PotentialVector&) const = default;

  double dot(const PotentialVector& o) const {
    require(o.size() == size(), "potential vector length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < values_.size(); ++i) s += values_[i] * o.values_[i];
    return s;
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }

private:
  std::vector<double> values_;
};

/// Unary regions {k} come first (region id == variable id), followed by the
/// higher-order regions in declared order. Within a region, local assignment
/// indices are mixed-radix with the lowest-numbered variable most significant.
class RegionGraph {
public:
  RegionGraph() = default;

  RegionGraph(std::vector<std::size_t> domains, std::vector<std::vector<std::size_t>> higher)
      : domains_(std::move(domains)) {
    require(!domains_.empty(), "graph needs at least one variable");
    for (std::size_t k = 0; k < domains_.size(); ++k) {
      require(domains_[k] >= 1, concat("variable ", k, " has an empty domain"));
      vars_.push_back({k});
    }
    for (auto& r : higher) {
      require(r.size() >= 2, "higher-order regions need at least two variables");
      for (std::size_t i = 0; i < r.size(); ++i) {
        require(r[i] < domains_.size(), concat("region references unknown variable ", r[i]));
        if (i > 0) require(r[i - 1] < r[i], "region variables must be distinct and ascending");
      }
      for (std::size_t j = domains_.size(); j < vars_.size(); ++j)
        require(vars_[j] != r, "duplicate region");
      vars_.push_back(std::move(r));
    }
    offsets_.assign(1, 0);
    for (const auto& r : vars_) {
      std::vector<std::size_t> strides(r.size());
      std::size_t size = 1;
      for (std::size_t i = r.size(); i-- > 0;) {
        strides[i] = size;
        size *= domains_[r[i]];
      }
      strides_.push_back(std::move(strides));
      sizes_.push_back(size);
      offsets_.push_back(offsets_.back() + size);
    }
    var_regions_.resize(domains_.size());
    for (std::size_t r = domains_.size(); r < vars_.size(); ++r)
      for (std::size_t k : vars_[r]) var_regions_[k].push_back(r);
  }

  std::size_t num_vars() const { return domains_.size(); }
  std::size_t num_regions() const { return vars_.size(); }
  std::size_t num_higher() const { return vars_.size() - domains_.size(); }
  std::size_t domain(std::size_t k) const { return domains_.at(k); }
  const std::vector<std::size_t>& domains() const { return domains_; }
  bool is_unary(std::size_t r) const { return r < domains_.size(); }

  /// Total slot count D.
  std::size_t size() const { return offsets_.back(); }
  std::size_t offset(std::size_t r) const { return offsets_.at(r); }
  std::size_t region_size(std::size_t r) const { return sizes_.at(r); }
  const std::vector<std::size_t>& region_vars(std::size_t r) const { return vars_.at(r); }
  const std::vector<std::size_t>& strides(std::size_t r) const { return strides_.at(r); }
  /// Higher-order regions that contain variable k.
  const std::vector<std::size_t>& regions_of(std::size_t k) const { return var_regions_.at(k); }

  std::size_t num_configurations() const {
    std::size_t n = 1;
    for (auto d : domains_) n *= d;
    return n;
  }

  /// Slot of region r under the given local labels (one per region variable).
  std::size_t slot(std::size_t r, std::span<const Label> local) const {
    const auto& vs = region_vars(r);
    require(local.size() == vs.size(), "local assignment arity mismatch");
    std::size_t idx = 0;
    for (std::size_t i = 0; i < vs.size(); ++i) {
      require(local[i] < domains_[vs[i]], concat("label ", local[i], " out of range for variable ", vs[i]));
      idx += local[i] * strides_[r][i];
    }
    return offsets_[r] + idx;
  }
  std::size_t slot(std::size_t r, std::initializer_list<Label> local) const {
    return slot(r, std::span<const Label>(local.begin(), local.size()));
  }

  /// Local assignment index of the restriction of x to region r.
  std::size_t local_index(std::size_t r, const Assignment& x) const {
    const auto& vs = vars_[r];
    std::size_t idx = 0;
    for (std::size_t i = 0; i < vs.size(); ++i) idx += x.labels[vs[i]] * strides_[r][i];
    return idx;
  }

  /// Label of the i-th variable of region r within local assignment index idx.
  Label local_label(std::size_t r, std::size_t idx, std::size_t i) const {
    return (idx / strides_[r][i]) % domains_[vars_[r][i]];
  }

  struct SlotInfo {
    std::size_t region;
    std::vector<Label> local;
  };

  SlotInfo slot_info(std::size_t slot) const {
    require(slot < size(), concat("slot ", slot, " out of range"));
    const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), slot);
    const auto r = static_cast<std::size_t>(it - offsets_.begin()) - 1;
    SlotInfo info{r, {}};
    const std::size_t idx = slot - offsets_[r];
    for (std::size_t i = 0; i < vars_[r].size(); ++i) info.local.push_back(local_label(r, idx, i));
    return info;
  }

  void check_assignment(const Assignment& x) const {
    require(x.size() == num_vars(), concat("assignment has ", x.size(), " labels, graph has ",
                                           num_vars(), " variables"));
    for (std::size_t k = 0; k < x.size(); ++k)
      require(x[k] < domains_[k], concat("label ", x[k], " out of range for variable ", k));
  }

  void check_vector(const PotentialVector& v, const char* what = "potential vector") const {
    require(v.size() == size(), concat(what, " has length ", v.size(), ", graph needs ", size()));
  }

  /// True when every higher-order region is a pair (k, k+1).
  bool is_chain() const {
    for (std::size_t r = num_vars(); r < num_regions(); ++r) {
      const auto& vs = vars_[r];
      if (vs.size() != 2 || vs[1] != vs[0] + 1) return false;
    }
    return true;
  }

  bool operator==(const RegionGraph& o) const {
    return domains_ == o.domains_ && vars_ == o.vars_;
  }

  /// Line-based text form: "variables K", "domains d0 d1 ...", one "region i j ..." per
  /// higher-order region.
  std::string describe() const {
    std::ostringstream os;
    os << "variables " << num_vars() << "\ndomains";
    for (auto d : domains_) os << ' ' << d;
    os << '\n';
    for (std::size_t r = num_vars(); r < num_regions(); ++r) {
      os << "region";
      for (auto k : vars_[r]) os << ' ' << k;
      os << '\n';
    }
    return os.str();
  }

  static RegionGraph parse(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t count = 0;
    bool have_count = false;
    std::vector<std::size_t> domains;
    std::vector<std::vector<std::size_t>> regions;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::istringstream ls(line);
      std::string key;
      if (!(ls >> key) || key[0] == '#') continue;
      std::vector<std::size_t> nums;
      long long v;
      while (ls >> v) {
        require(v >= 0, concat("graph line ", lineno, ": negative value"));
        nums.push_back(static_cast<std::size_t>(v));
      }
      require(ls.eof(), concat("graph line ", lineno, ": expected integers"));
      if (key == "variables") {
        require(nums.size() == 1, concat("graph line ", lineno, ": 'variables' takes one value"));
        count = nums[0];
        have_count = true;
      } else if (key == "domains") {
        domains = nums;
      } else if (key == "region") {
        regions.push_back(nums);
      } else {
        throw StructuralError(concat("graph line ", lineno, ": unknown key '", key, "'"));
      }
    }
    require(have_count, "graph description lacks 'variables'");
    if (domains.size() == 1 && count > 1) domains.assign(count, domains[0]);
    require(domains.size() == count, "graph description: domain count does not match variables");
    return RegionGraph(std::move(domains), std::move(regions));
  }

private:
  std::vector<std::size_t> domains_;
  std::vector<std::vector<std::size_t>> vars_;
  std::vector<std::vector<std::size_t>> strides_;
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_{0};
  std::vector<std::vector<std::size_t>> var_regions_;
};

inline RegionGraph build_chain(std::size_t K, std::size_t d) {
  require(K >= 1 && d >= 1, "chain needs K >= 1 and d >= 1");
  std::vector<std::vector<std::size_t>> pairs;
  for (std::size_t k = 0; k + 1 < K; ++k) pairs.push_back({k, k + 1});
  return RegionGraph(std::vector<std::size_t>(K, d), std::move(pairs));
}

/// Chain edges (k, k+1) followed by skip edges (k, k+2).
inline RegionGraph build_second_order(std::size_t K, std::size_t d) {
  require(K >= 1 && d >= 1, "graph needs K >= 1 and d >= 1");
  std::vector<std::vector<std::size_t>> pairs;
  for (std::size_t k = 0; k + 1 < K; ++k) pairs.push_back({k, k + 1});
  for (std::size_t k = 0; k + 2 < K; ++k) pairs.push_back({k, k + 2});
  return RegionGraph(std::vector<std::size_t>(K, d), std::move(pairs));
}

inline RegionGraph build_fully_connected(std::size_t K, std::size_t d) {
  require(K >= 1 && d >= 1, "graph needs K >= 1 and d >= 1");
  std::vector<std::vector<std::size_t>> pairs;
  for (std::size_t i = 0; i < K; ++i)
    for (std::size_t j = i + 1; j < K; ++j) pairs.push_back({i, j});
  return RegionGraph(std::vector<std::size_t>(K, d), std::move(pairs));
}

/// Slot selected in each region by x, in region order.
inline std::vector<std::size_t> selected_slots(const RegionGraph& g, const Assignment& x) {
  g.check_assignment(x);
  std::vector<std::size_t> out(g.num_regions());
  for (std::size_t r = 0; r < g.num_regions(); ++r) out[r] = g.offset(r) + g.local_index(r, x);
  return out;
}

/// Keeps f at the slots consistent with x and zeroes the rest.
inline PotentialVector mask(const RegionGraph& g, const PotentialVector& f, const Assignment& x) {
  g.check_vector(f);
  PotentialVector out(g.size(), 0.0);
  for (std::size_t s : selected_slots(g, x)) out[s] = f[s];
  return out;
}

/// Σ_r f_r(x_r).
inline double score_decomposed(const RegionGraph& g, const PotentialVector& f, const Assignment& x) {
  g.check_vector(f);
  double s = 0.0;
  for (std::size_t slot : selected_slots(g, x)) s += f[slot];
  return s;
}

/// Calls fn(x) for every full assignment in lexicographic order.
template <class Fn>
void for_each_assignment(const RegionGraph& g, Fn&& fn) {
  Assignment x(std::vector<Label>(g.num_vars(), 0));
  while (true) {
    fn(static_cast<const Assignment&>(x));
    std::size_t k = g.num_vars();
    while (k-- > 0) {
      if (++x.labels[k] < g.domain(k)) break;
      x.labels[k] = 0;
      if (k == 0) return;
    }
  }
}

}  // namespace nlstruct
