// Copyright 2026 The adsb-sentinel Authors
// SPDX-License-Identifier: Apache-2.0
#include "sentinel/attack.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace sentinel {

namespace {

// column in the feature matrix targeted by each drift kind
int drift_column(AttackKind k) {
  switch (k) {
    case AttackKind::AltitudeDrift: return 5;
    case AttackKind::GroundspeedDrift: return 2;
    case AttackKind::HeadingDrift: return 3;
    default: throw SchemaError("drift_column: not a drift kind");
  }
}

double get_feature(const StateVector& r, int col) {
  switch (col) {
    case 0: return r.latitude;
    case 1: return r.longitude;
    case 2: return r.groundspeed;
    case 3: return r.heading;
    case 4: return r.vertical_rate;
    case 5: return r.altitude;
  }
  throw SchemaError("bad feature column");
}

void set_feature(StateVector& r, int col, double v) {
  switch (col) {
    case 0: r.latitude = v; return;
    case 1: r.longitude = v; return;
    case 2: r.groundspeed = v; return;
    case 3: r.heading = v; return;
    case 4: r.vertical_rate = v; return;
    case 5: r.altitude = v; return;
  }
  throw SchemaError("bad feature column");
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string attack_name(AttackKind k) {
  switch (k) {
    case AttackKind::AltitudeDrift: return "altitude_drift";
    case AttackKind::GroundspeedDrift: return "groundspeed_drift";
    case AttackKind::HeadingDrift: return "heading_drift";
    case AttackKind::StandingStill: return "standing_still";
  }
  return "?";
}

double default_delta(AttackKind k) {
  switch (k) {
    case AttackKind::AltitudeDrift: return kAltitudeDeltaFt;
    case AttackKind::GroundspeedDrift: return kGroundspeedDeltaKn;
    case AttackKind::HeadingDrift: return kHeadingDeltaDeg;
    default: return 0.0;
  }
}

Injection inject_gradual(const FlightSequence& flight, AttackKind kind, double delta,
                         int start_index) {
  if (kind == AttackKind::StandingStill)
    throw SchemaError("inject_gradual: standing_still is not a drift attack");
  if (delta <= 0.0) throw SchemaError("inject_gradual: delta must be positive");
  int len = static_cast<int>(flight.records.size());
  if (start_index < 0 || start_index + 2 > len)
    throw SchemaError("inject_gradual: start_index " + std::to_string(start_index) +
                      " out of range for flight of length " + std::to_string(len));
  int col = drift_column(kind);
  Injection inj;
  inj.flight = flight;
  inj.begin = start_index;
  inj.end = len;
  for (int i = start_index; i < len; ++i) {
    double v = get_feature(inj.flight.records[static_cast<std::size_t>(i)], col) +
               static_cast<double>(i - start_index + 1) * delta;
    if (kind == AttackKind::HeadingDrift) v = wrap_heading(v);
    set_feature(inj.flight.records[static_cast<std::size_t>(i)], col, v);
  }
  return inj;
}

Injection inject_standing_still(const FlightSequence& flight, int k, int start_index) {
  if (k < 2) throw SchemaError("inject_standing_still: K must be >= 2");
  int len = static_cast<int>(flight.records.size());
  if (start_index < 0 || start_index + k > len)
    throw SchemaError("inject_standing_still: range [" + std::to_string(start_index) + "," +
                      std::to_string(start_index + k) + ") exceeds flight length " +
                      std::to_string(len));
  Injection inj;
  inj.flight = flight;
  inj.begin = start_index;
  inj.end = start_index + k;
  double lat0 = flight.records[static_cast<std::size_t>(start_index)].latitude;
  double lon0 = flight.records[static_cast<std::size_t>(start_index)].longitude;
  for (int i = start_index; i < start_index + k; ++i) {
    auto& r = inj.flight.records[static_cast<std::size_t>(i)];
    r.groundspeed = 0.0;
    r.latitude = lat0;
    r.longitude = lon0;
  }
  return inj;
}

OracleFinding attack_oracle(const FlightSequence& original, const FlightSequence& tampered) {
  if (original.records.size() != tampered.records.size())
    throw SchemaError("attack_oracle: flight lengths differ");
  int len = static_cast<int>(original.records.size());
  std::array<std::vector<int>, kFeatureCount> diffs;
  for (int i = 0; i < len; ++i)
    for (int c = 0; c < kFeatureCount; ++c)
      if (get_feature(original.records[static_cast<std::size_t>(i)], c) !=
          get_feature(tampered.records[static_cast<std::size_t>(i)], c))
        diffs[static_cast<std::size_t>(c)].push_back(i);

  bool any = false;
  int first = len, last = -1;
  for (const auto& d : diffs) {
    if (d.empty()) continue;
    any = true;
    first = std::min(first, d.front());
    last = std::max(last, d.back());
  }
  OracleFinding out;
  if (!any) {
    out.result = OracleFinding::Result::NoDifference;
    return out;
  }
  auto ambiguous = [&]() {
    out.result = OracleFinding::Result::Ambiguous;
    return out;
  };

  // standing still: speed zeroed, position frozen, everything else untouched.
  // A speed-only diff with nonzero values instead falls through to the drift
  // analysis below.
  bool position_changed = !diffs[0].empty() || !diffs[1].empty();
  bool speed_zeroed = !diffs[2].empty();
  for (int i : diffs[2])
    speed_zeroed = speed_zeroed && tampered.records[static_cast<std::size_t>(i)].groundspeed == 0.0;
  if (diffs[3].empty() && diffs[4].empty() && diffs[5].empty() &&
      (position_changed || speed_zeroed)) {
    int b = first, e = last + 1;
    if (e - b < 2) return ambiguous();
    double lat0 = tampered.records[static_cast<std::size_t>(b)].latitude;
    double lon0 = tampered.records[static_cast<std::size_t>(b)].longitude;
    bool ok = true;
    for (int i = b; i < e && ok; ++i) {
      const auto& r = tampered.records[static_cast<std::size_t>(i)];
      ok = r.groundspeed == 0.0 && r.latitude == lat0 && r.longitude == lon0;
    }
    if (ok) {
      out.result = OracleFinding::Result::Detected;
      out.kind = AttackKind::StandingStill;
      out.begin = b;
      out.end = e;
      return out;
    }
    return ambiguous();
  }

  // drift: exactly one of {altitude, groundspeed, heading} differs
  int drift_col = -1;
  for (int c : {5, 2, 3}) {
    if (diffs[static_cast<std::size_t>(c)].empty()) continue;
    if (drift_col != -1) return ambiguous();
    drift_col = c;
  }
  if (drift_col == -1) return ambiguous();
  for (int c = 0; c < kFeatureCount; ++c)
    if (c != drift_col && !diffs[static_cast<std::size_t>(c)].empty()) return ambiguous();

  int b = diffs[static_cast<std::size_t>(drift_col)].front();
  int e = diffs[static_cast<std::size_t>(drift_col)].back() + 1;
  double o0 = get_feature(original.records[static_cast<std::size_t>(b)], drift_col);
  double t0 = get_feature(tampered.records[static_cast<std::size_t>(b)], drift_col);
  double delta = t0 - o0;
  if (drift_col == 3 && delta < 0.0) delta += 360.0;  // wrapped heading step
  if (delta <= 0.0) return ambiguous();
  // The recovered delta carries one rounding, so the linear pattern is checked
  // with a tight relative tolerance rather than bitwise equality.
  for (int i = b; i < e; ++i) {
    double expect = get_feature(original.records[static_cast<std::size_t>(i)], drift_col) +
                    static_cast<double>(i - b + 1) * delta;
    if (drift_col == 3) expect = wrap_heading(expect);
    double got = get_feature(tampered.records[static_cast<std::size_t>(i)], drift_col);
    double diff = std::abs(got - expect);
    if (drift_col == 3) diff = std::min(diff, 360.0 - diff);  // circular distance
    if (diff > 1e-9 * std::max(1.0, std::abs(expect))) return ambiguous();
  }
  out.result = OracleFinding::Result::Detected;
  out.kind = drift_col == 5   ? AttackKind::AltitudeDrift
             : drift_col == 2 ? AttackKind::GroundspeedDrift
                              : AttackKind::HeadingDrift;
  out.begin = b;
  out.end = e;
  out.delta = delta;
  return out;
}

// --- dataset builders --------------------------------------------------------

const std::array<std::string, 4> DatasetB::kSubsetNames = {"altitude", "groundspeed", "heading",
                                                           "benign"};

namespace {

struct PreparedFlight {
  int condition;  // kClassAltitude..kClassBenign
  std::vector<FeatureWindow> windows;
};

// Assigns one condition per flight (round robin over the shuffled order),
// injects accordingly, and extracts windows overlapping the attacked span.
std::vector<PreparedFlight> prepare(const std::vector<FlightSequence>& flights,
                                    const std::vector<std::size_t>& order, Rng& base,
                                    const BuildOptions& opts) {
  int L = opts.sequence_length;
  std::vector<PreparedFlight> out;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const FlightSequence& fl = flights[order[pos]];
    int len = static_cast<int>(fl.records.size());
    if (len < L + 2) continue;
    Rng rng = base.fork(order[pos]);
    PreparedFlight pf;
    pf.condition = static_cast<int>(pos % 4);
    const FlightSequence* source = &fl;
    Injection inj;
    int abegin = 0;
    if (pf.condition != kClassBenign) {
      // onset within the first 20% of the flight
      abegin = static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, len / 5))));
      AttackKind kind = pf.condition == kClassAltitude      ? AttackKind::AltitudeDrift
                        : pf.condition == kClassGroundspeed ? AttackKind::GroundspeedDrift
                                                            : AttackKind::HeadingDrift;
      inj = inject_gradual(fl, kind, opts.deltas[static_cast<std::size_t>(pf.condition)], abegin);
      source = &inj.flight;
    }
    ag::RowMat m = flight_matrix(*source);
    for (int w = 0; w < opts.windows_per_flight; ++w) {
      int lo = 0, hi = len - L;
      // Attacked windows must overlap the tampered span by at least half
      // their length, so the earliest admissible start is L/2 rows before
      // the onset. Starts are otherwise uniform so positives still span the
      // whole range of accumulated drift.
      if (pf.condition != kClassBenign) lo = std::min(std::max(abegin - L / 2, 0), hi);
      if (hi < lo) continue;
      int wstart = lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
      FeatureWindow fw;
      fw.values = m.middleRows(wstart, L);
      fw.flight_id = fl.id();
      fw.start_index = wstart;
      fw.label = pf.condition;
      pf.windows.push_back(std::move(fw));
    }
    if (!pf.windows.empty()) out.push_back(std::move(pf));
  }
  return out;
}

std::array<std::vector<FeatureWindow>, 4> windows_by_condition(
    const std::vector<PreparedFlight>& prepared) {
  std::array<std::vector<FeatureWindow>, 4> groups;
  for (const auto& pf : prepared)
    for (const auto& w : pf.windows)
      groups[static_cast<std::size_t>(pf.condition)].push_back(w);
  return groups;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_order(
    std::size_t n, double train_fraction, Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  std::size_t cut = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(n)));
  return {{order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut)},
          {order.begin() + static_cast<std::ptrdiff_t>(cut), order.end()}};
}

// one-vs-rest subset: all target-condition windows labeled 1, an equal number
// of negatives drawn round-robin from the other conditions labeled 0
std::vector<FeatureWindow> make_subset(const std::array<std::vector<FeatureWindow>, 4>& groups,
                                       int target) {
  std::vector<FeatureWindow> out;
  for (const auto& w : groups[static_cast<std::size_t>(target)]) {
    FeatureWindow pw = w;
    pw.label = 1;
    out.push_back(std::move(pw));
  }
  std::size_t need = out.size();
  std::array<std::size_t, 4> cursor{0, 0, 0, 0};
  std::size_t taken = 0;
  int c = (target + 1) % 4;
  std::size_t stalled = 0;
  while (taken < need && stalled < 4) {
    if (c == target) {
      c = (c + 1) % 4;
      continue;
    }
    const auto& g = groups[static_cast<std::size_t>(c)];
    if (cursor[static_cast<std::size_t>(c)] < g.size()) {
      FeatureWindow nw = g[cursor[static_cast<std::size_t>(c)]++];
      nw.label = 0;
      out.push_back(std::move(nw));
      ++taken;
      stalled = 0;
    } else {
      ++stalled;
    }
    c = (c + 1) % 4;
  }
  return out;
}

void trim_to_balance(std::array<std::vector<FeatureWindow>, 4>& groups) {
  std::size_t mn = groups[0].size();
  for (const auto& g : groups) mn = std::min(mn, g.size());
  for (auto& g : groups) g.resize(mn);
}

}  // namespace

DatasetB build_dataset_b(const std::vector<FlightSequence>& flights, std::uint64_t seed,
                         const BuildOptions& opts) {
  if (flights.size() < 8)
    throw SchemaError("build_dataset_b: need at least 8 flights, got " +
                      std::to_string(flights.size()));
  Rng rng(seed);
  auto [train_idx, test_idx] = split_order(flights.size(), opts.train_fraction, rng);
  Rng prep_rng = rng.fork(1);
  auto train_groups = windows_by_condition(prepare(flights, train_idx, prep_rng, opts));
  auto test_groups = windows_by_condition(prepare(flights, test_idx, prep_rng, opts));
  trim_to_balance(train_groups);
  trim_to_balance(test_groups);
  DatasetB out;
  for (int t = 0; t < 4; ++t) {
    out.subsets[static_cast<std::size_t>(t)].train = make_subset(train_groups, t);
    out.subsets[static_cast<std::size_t>(t)].test = make_subset(test_groups, t);
  }
  return out;
}

DatasetC build_dataset_c(const std::vector<FlightSequence>& flights, std::uint64_t seed,
                         const BuildOptions& opts) {
  if (flights.size() < 8)
    throw SchemaError("build_dataset_c: need at least 8 flights, got " +
                      std::to_string(flights.size()));
  Rng rng(seed);
  auto [train_idx, test_idx] = split_order(flights.size(), opts.train_fraction, rng);
  Rng prep_rng = rng.fork(1);
  auto train_groups = windows_by_condition(prepare(flights, train_idx, prep_rng, opts));
  auto test_groups = windows_by_condition(prepare(flights, test_idx, prep_rng, opts));
  trim_to_balance(train_groups);
  trim_to_balance(test_groups);
  DatasetC out;
  for (auto& g : train_groups)
    out.windows.train.insert(out.windows.train.end(), g.begin(), g.end());
  for (auto& g : test_groups)
    out.windows.test.insert(out.windows.test.end(), g.begin(), g.end());
  return out;
}

std::vector<FeatureWindow> build_unseen_windows(const std::vector<FlightSequence>& flights,
                                                std::uint64_t seed, const BuildOptions& opts) {
  int L = opts.sequence_length;
  int K = opts.standing_still_k;
  Rng base(seed);
  std::vector<std::size_t> order(flights.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  base.shuffle(order);
  std::vector<FeatureWindow> out;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const FlightSequence& fl = flights[order[pos]];
    int len = static_cast<int>(fl.records.size());
    if (len < L + K + 4) continue;
    Rng rng = base.fork(order[pos]);
    bool attacked = pos % 2 == 0;
    FeatureWindow fw;
    fw.flight_id = fl.id();
    if (attacked) {
      int astart = 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(len - K - 4)));
      Injection inj = inject_standing_still(fl, K, astart);
      ag::RowMat m = flight_matrix(inj.flight);
      int lo = std::max(0, astart + K - L);
      int hi = std::min(astart, len - L);
      int wstart = lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
      fw.values = m.middleRows(wstart, L);
      fw.start_index = wstart;
      fw.label = kClassUnseenAttack;
    } else {
      ag::RowMat m = flight_matrix(fl);
      int wstart = static_cast<int>(rng.below(static_cast<std::uint64_t>(len - L + 1)));
      fw.values = m.middleRows(wstart, L);
      fw.start_index = wstart;
      fw.label = kClassBenign;
    }
    out.push_back(std::move(fw));
  }
  return out;
}

void append_windows_csv(const std::string& path, const std::vector<FeatureWindow>& windows,
                        const std::string& split_tag, bool header) {
  std::ofstream outf(path, header ? std::ios::trunc : std::ios::app);
  if (!outf) throw IoError("cannot open output file: " + path);
  if (header) {
    outf << "window,flight,start,split,label";
    if (!windows.empty()) {
      Eigen::Index n = windows.front().values.size();
      for (Eigen::Index i = 0; i < n; ++i) outf << ",v" << i;
    }
    outf << "\n";
  }
  std::size_t id = 0;
  for (const auto& w : windows) {
    outf << split_tag << "-" << id++ << ',' << w.flight_id << ',' << w.start_index << ','
         << split_tag << ',' << w.label;
    for (Eigen::Index r = 0; r < w.values.rows(); ++r)
      for (Eigen::Index c = 0; c < w.values.cols(); ++c) outf << ',' << fmt_double(w.values(r, c));
    outf << '\n';
  }
}

void write_windows_csv(const std::string& path, const std::vector<FeatureWindow>& windows,
                       const std::string& split_tag) {
  append_windows_csv(path, windows, split_tag, true);
}

std::vector<FeatureWindow> read_windows_csv(const std::string& path,
                                            const std::string& split_filter) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open input file: " + path);
  std::string header;
  if (!std::getline(in, header)) throw SchemaError("missing header row in " + path);
  std::vector<FeatureWindow> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    f.reserve(320);
    std::string cur;
    for (char ch : line) {
      if (ch == ',') {
        f.push_back(cur);
        cur.clear();
      } else if (ch != '\r') {
        cur += ch;
      }
    }
    f.push_back(cur);
    if (f.size() < 5 + kFeatureCount * 2 || (f.size() - 5) % kFeatureCount != 0)
      throw SchemaError("malformed window row in " + path);
    if (!split_filter.empty() && f[3] != split_filter) continue;
    FeatureWindow w;
    w.flight_id = f[1];
    w.start_index = std::stoi(f[2]);
    w.label = std::stoi(f[4]);
    Eigen::Index L = static_cast<Eigen::Index>((f.size() - 5) / kFeatureCount);
    w.values.resize(L, kFeatureCount);
    for (Eigen::Index r = 0; r < L; ++r)
      for (Eigen::Index c = 0; c < kFeatureCount; ++c)
        w.values(r, c) = std::strtod(f[5 + static_cast<std::size_t>(r * kFeatureCount + c)].c_str(),
                                     nullptr);
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace sentinel
