// Copyright 2026 The adsb-sentinel Authors
// SPDX-License-Identifier: Apache-2.0
#include "sentinel/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace sentinel {

namespace {

constexpr double kMetersPerSecToKnots = 1.9438444924406046;
constexpr double kMetersToFeet = 3.280839895013123;
constexpr double kMetersPerSecToFeetPerMin = 196.8503937007874;

std::vector<std::string> split_csv_line(const std::string& line) {
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

std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string FlightSequence::id() const {
  std::ostringstream os;
  os << callsign << "/" << icao24;
  if (!records.empty()) os << "@" << static_cast<long long>(records.front().time);
  return os.str();
}

double wrap_heading(double deg) {
  double w = std::fmod(deg, 360.0);
  if (w < 0) w += 360.0;
  if (w >= 360.0) w = 0.0;
  return w;
}

IngestResult ingest_csv(const std::string& path, Units units) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open input file: " + path);
  std::string header;
  if (!std::getline(in, header)) throw SchemaError("missing header row in " + path);
  auto cols = split_csv_line(header);
  auto col = [&](const std::string& name) {
    auto it = std::find(cols.begin(), cols.end(), name);
    if (it == cols.end()) throw SchemaError("missing required column '" + name + "' in " + path);
    return static_cast<std::size_t>(it - cols.begin());
  };
  std::size_t c_time = col("time"), c_icao = col("icao24"), c_callsign = col("callsign");
  std::size_t c_lat = col("lat"), c_lon = col("lon"), c_vel = col("velocity");
  std::size_t c_hdg = col("heading"), c_vr = col("vertrate"), c_alt = col("baroaltitude");

  IngestResult result;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() < cols.size()) {
      ++result.skipped;
      continue;
    }
    auto time = parse_double(f[c_time]);
    auto lat = parse_double(f[c_lat]);
    auto lon = parse_double(f[c_lon]);
    auto vel = parse_double(f[c_vel]);
    auto hdg = parse_double(f[c_hdg]);
    auto vr = parse_double(f[c_vr]);
    auto alt = parse_double(f[c_alt]);
    if (!time || !lat || !lon || !vel || !hdg || !vr || !alt || f[c_icao].empty() ||
        std::abs(*lat) > 90.0 || std::abs(*lon) > 180.0 || *vel < 0.0) {
      ++result.skipped;
      continue;
    }
    StateVector sv;
    sv.time = *time;
    sv.icao24 = f[c_icao];
    sv.callsign = f[c_callsign];
    sv.latitude = *lat;
    sv.longitude = *lon;
    if (units == Units::Metric) {
      sv.groundspeed = *vel * kMetersPerSecToKnots;
      sv.vertical_rate = *vr * kMetersPerSecToFeetPerMin;
      sv.altitude = *alt * kMetersToFeet;
    } else {
      sv.groundspeed = *vel;
      sv.vertical_rate = *vr;
      sv.altitude = *alt;
    }
    sv.heading = wrap_heading(*hdg);
    result.records.push_back(std::move(sv));
  }
  return result;
}

void write_flights_csv(const std::string& path, const std::vector<FlightSequence>& flights) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open output file: " + path);
  out << "time,icao24,callsign,lat,lon,velocity,heading,vertrate,baroaltitude\n";
  for (const auto& fl : flights) {
    for (const auto& r : fl.records) {
      out << fmt_double(r.time) << ',' << r.icao24 << ',' << r.callsign << ','
          << fmt_double(r.latitude) << ',' << fmt_double(r.longitude) << ','
          << fmt_double(r.groundspeed) << ',' << fmt_double(r.heading) << ','
          << fmt_double(r.vertical_rate) << ',' << fmt_double(r.altitude) << '\n';
    }
  }
}

std::vector<FlightSequence> group_flights(std::vector<StateVector> records, double gap_seconds) {
  std::map<std::pair<std::string, std::string>, std::vector<StateVector>> by_key;
  for (auto& r : records) by_key[{r.callsign, r.icao24}].push_back(std::move(r));
  std::vector<FlightSequence> flights;
  for (auto& [key, recs] : by_key) {
    std::stable_sort(recs.begin(), recs.end(),
                     [](const StateVector& a, const StateVector& b) { return a.time < b.time; });
    FlightSequence cur;
    cur.callsign = key.first;
    cur.icao24 = key.second;
    for (auto& r : recs) {
      if (!cur.records.empty()) {
        double dt = r.time - cur.records.back().time;
        if (dt == 0.0) continue;  // duplicate timestamp, keep first
        if (dt > gap_seconds) {
          flights.push_back(std::move(cur));
          cur = FlightSequence{key.first, key.second, {}};
        }
      }
      cur.records.push_back(std::move(r));
    }
    if (!cur.records.empty()) flights.push_back(std::move(cur));
  }
  return flights;
}

std::vector<FlightSequence> clean(std::vector<FlightSequence> flights, std::size_t min_len) {
  std::vector<FlightSequence> kept;
  for (auto& fl : flights) {
    if (fl.records.size() < min_len) continue;
    bool ok = true;
    for (const auto& r : fl.records) {
      for (double v : {r.time, r.latitude, r.longitude, r.groundspeed, r.heading,
                       r.vertical_rate, r.altitude}) {
        if (!std::isfinite(v)) {
          ok = false;
          break;
        }
      }
      if (!ok) break;
    }
    if (ok) kept.push_back(std::move(fl));
  }
  return kept;
}

ag::RowMat flight_matrix(const FlightSequence& flight) {
  ag::RowMat m(static_cast<Eigen::Index>(flight.records.size()), kFeatureCount);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const auto& r = flight.records[static_cast<std::size_t>(i)];
    m(i, 0) = r.latitude;
    m(i, 1) = r.longitude;
    m(i, 2) = r.groundspeed;
    m(i, 3) = r.heading;
    m(i, 4) = r.vertical_rate;
    m(i, 5) = r.altitude;
  }
  return m;
}

NormalizationStats fit_normalizer(const std::vector<FlightSequence>& benign_flights) {
  Eigen::Index total = 0;
  for (const auto& fl : benign_flights) total += static_cast<Eigen::Index>(fl.records.size());
  if (total == 0) throw SchemaError("fit_normalizer: no records");
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(kFeatureCount);
  Eigen::RowVectorXd sq = Eigen::RowVectorXd::Zero(kFeatureCount);
  for (const auto& fl : benign_flights) {
    ag::RowMat m = flight_matrix(fl);
    sum += m.colwise().sum();
    sq += m.array().square().matrix().colwise().sum();
  }
  NormalizationStats stats;
  for (int j = 0; j < kFeatureCount; ++j) {
    double mean = sum[j] / static_cast<double>(total);
    double var = sq[j] / static_cast<double>(total) - mean * mean;
    double sd = std::sqrt(std::max(var, 0.0));
    if (sd <= 0.0)
      throw SchemaError("fit_normalizer: feature " + std::to_string(j) + " has zero variance");
    stats.mean[j] = mean;
    stats.stddev[j] = sd;
  }
  return stats;
}

ag::RowMat apply_normalizer(const NormalizationStats& stats, const ag::RowMat& raw) {
  ag::RowMat out = raw;
  for (int j = 0; j < kFeatureCount; ++j)
    out.col(j) = (raw.col(j).array() - stats.mean[j]) / stats.stddev[j];
  return out;
}

ag::RowMat denormalize(const NormalizationStats& stats, const ag::RowMat& normalized) {
  ag::RowMat out = normalized;
  for (int j = 0; j < kFeatureCount; ++j)
    out.col(j) = normalized.col(j).array() * stats.stddev[j] + stats.mean[j];
  return out;
}

std::vector<FeatureWindow> make_windows(const FlightSequence& flight, int length, int stride,
                                        WindowMode mode) {
  if (length < 2) throw SchemaError("make_windows: length must be >= 2");
  if (stride < 1) throw SchemaError("make_windows: stride must be >= 1");
  std::vector<FeatureWindow> out;
  ag::RowMat m = flight_matrix(flight);
  Eigen::Index n = m.rows();
  Eigen::Index need = mode == WindowMode::Forecasting ? length + 1 : length;
  if (n < need) return out;
  for (Eigen::Index start = 0; start + need <= n; start += stride) {
    FeatureWindow w;
    w.values = m.middleRows(start, length);
    w.flight_id = flight.id();
    w.start_index = static_cast<int>(start);
    if (mode == WindowMode::Forecasting) {
      w.has_target = true;
      w.target = m.row(start + length);
    }
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<FlightSequence> synthesize_flights(int n, std::uint64_t seed,
                                               const SynthProfile& profile) {
  if (n < 1) throw SchemaError("synthesize_flights: n must be >= 1");
  constexpr double kDt = 10.0;  // seconds between state vectors
  std::vector<FlightSequence> flights;
  flights.reserve(static_cast<std::size_t>(n));
  Rng base(seed);
  for (int i = 0; i < n; ++i) {
    Rng rng = base.fork(static_cast<std::uint64_t>(i));
    FlightSequence fl;
    {
      char cs[16];
      std::snprintf(cs, sizeof(cs), "SYN%04d", i);
      fl.callsign = cs;
      char hex[16];
      std::snprintf(hex, sizeof(hex), "%06x", 0x100000 + i);
      fl.icao24 = hex;
    }
    int len = profile.min_len + static_cast<int>(rng.below(
                  static_cast<std::uint64_t>(profile.max_len - profile.min_len + 1)));
    double cruise_alt = rng.uniform(profile.min_cruise_alt, profile.max_cruise_alt);
    double alt = rng.uniform(5000.0, 8000.0);
    double climb_rate = rng.uniform(1500.0, 2400.0);
    double descent_rate = rng.uniform(1400.0, 2200.0);
    double cruise_speed = rng.uniform(profile.min_speed, profile.max_speed);
    double gs = cruise_speed + rng.uniform(-20.0, 20.0);
    double heading = rng.uniform(0.0, 360.0);
    double lat = rng.uniform(35.0, 55.0);
    double lon = rng.uniform(-90.0, -60.0);
    double t0 = 1.6e9 + static_cast<double>(i) * 50000.0;
    int descend_start = len - static_cast<int>((cruise_alt - 6000.0) / (descent_rate / 6.0)) - 5;
    int turn_left = 0;
    double turn_rate = 0.0;
    double vr = 0.0;
    double vr_noise = 0.0;
    enum { Climb, Cruise, Descend } phase = Climb;
    for (int t = 0; t < len; ++t) {
      // vertical profile: altitude integrates vertical_rate exactly
      vr_noise = 0.8 * vr_noise + rng.normal(0.0, 12.0);
      switch (phase) {
        case Climb:
          vr = climb_rate + vr_noise;
          if (alt >= cruise_alt) {
            phase = Cruise;
            vr = vr_noise * 0.2;
          }
          break;
        case Cruise:
          vr = vr_noise * 0.5;
          if (t >= descend_start && descend_start > 0) phase = Descend;
          break;
        case Descend:
          vr = -descent_rate + vr_noise;
          if (alt <= 6000.0) vr = vr_noise * 0.2;
          break;
      }
      // heading: held, with occasional brief course changes. At a 10 s cadence
      // a standard-rate turn sweeps tens of degrees per sample and lasts only
      // a few samples before the new course is held.
      if (turn_left > 0) {
        heading = wrap_heading(heading + turn_rate);
        --turn_left;
      } else if (rng.uniform() < 0.015) {
        turn_left = 1 + static_cast<int>(rng.below(3));
        double mag = rng.uniform(8.0, 25.0);
        turn_rate = rng.uniform() < 0.5 ? mag : -mag;
      }
      // groundspeed: bounded jitter around the cruise speed
      gs += 0.05 * (cruise_speed - gs) + rng.normal(0.0, 1.2);
      gs = std::clamp(gs, profile.min_speed - 15.0, profile.max_speed + 15.0);

      StateVector sv;
      sv.time = t0 + t * kDt;
      sv.icao24 = fl.icao24;
      sv.callsign = fl.callsign;
      sv.latitude = lat;
      sv.longitude = lon;
      sv.groundspeed = gs;
      sv.heading = heading;
      sv.vertical_rate = vr;
      sv.altitude = alt;
      fl.records.push_back(std::move(sv));

      // advance state by dead reckoning; gs in knots -> nm per 10 s
      double dist_nm = gs * kDt / 3600.0;
      double h_rad = heading * std::numbers::pi / 180.0;
      lat += dist_nm * std::cos(h_rad) / 60.0;
      lon += dist_nm * std::sin(h_rad) / (60.0 * std::cos(lat * std::numbers::pi / 180.0));
      alt += vr * kDt / 60.0;
    }
    flights.push_back(std::move(fl));
  }
  return flights;
}

}  // namespace sentinel
