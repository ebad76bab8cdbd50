// Copyright 2026 The adsb-sentinel Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sentinel/rng.hpp"
#include "sentinel/tensor.hpp"

namespace sentinel {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One decoded state report. Feature order everywhere downstream:
// latitude, longitude, groundspeed, heading, vertical_rate, altitude.
struct StateVector {
  double time = 0;  // unix seconds
  std::string icao24;
  std::string callsign;
  double latitude = 0;       // degrees
  double longitude = 0;      // degrees
  double groundspeed = 0;    // knots
  double heading = 0;        // degrees [0,360)
  double vertical_rate = 0;  // feet/minute
  double altitude = 0;       // feet
};

constexpr int kFeatureCount = 6;

struct FlightSequence {
  std::string callsign;
  std::string icao24;
  std::vector<StateVector> records;  // strictly increasing time

  std::string id() const;
  std::size_t size() const { return records.size(); }
};

struct NormalizationStats {
  std::array<double, kFeatureCount> mean{};
  std::array<double, kFeatureCount> stddev{};
};

// Fixed-length window of raw (unnormalized) feature rows plus provenance.
struct FeatureWindow {
  ag::RowMat values;  // L x 6
  int label = -1;     // -1 none; else binary 0/1 or class id
  bool has_target = false;
  Eigen::RowVectorXd target;  // next-step raw feature row for forecasting
  std::string flight_id;
  int start_index = 0;
};

enum class Units { Aviation, Metric };

struct IngestResult {
  std::vector<StateVector> records;
  std::size_t skipped = 0;
};

double wrap_heading(double deg);

// CSV schema: time,icao24,callsign,lat,lon,velocity,heading,vertrate,baroaltitude
IngestResult ingest_csv(const std::string& path, Units units = Units::Aviation);
void write_flights_csv(const std::string& path, const std::vector<FlightSequence>& flights);

// One flight per (callsign, icao24), time-sorted; a gap > gap_seconds splits.
// Exact-duplicate timestamps are dropped, keeping the first record.
std::vector<FlightSequence> group_flights(std::vector<StateVector> records,
                                          double gap_seconds = 900.0);

std::vector<FlightSequence> clean(std::vector<FlightSequence> flights, std::size_t min_len);

// z-score stats over benign flights only; zero-variance feature is an error
NormalizationStats fit_normalizer(const std::vector<FlightSequence>& benign_flights);

ag::RowMat flight_matrix(const FlightSequence& flight);
ag::RowMat apply_normalizer(const NormalizationStats& stats, const ag::RowMat& raw);
ag::RowMat denormalize(const NormalizationStats& stats, const ag::RowMat& normalized);

enum class WindowMode { Classification, Forecasting };

// Sliding windows over one flight; forecasting windows carry the next row as
// target and therefore stop one row earlier. Windows never span flights.
std::vector<FeatureWindow> make_windows(const FlightSequence& flight, int length, int stride,
                                        WindowMode mode);

struct SynthProfile {
  int min_len = 90;
  int max_len = 140;
  double min_speed = 250.0;  // knots
  double max_speed = 500.0;
  double min_cruise_alt = 28000.0;  // feet
  double max_cruise_alt = 38000.0;
};

// Kinematically smooth trajectories at 10 s cadence, deterministic per seed.
std::vector<FlightSequence> synthesize_flights(int n, std::uint64_t seed,
                                               const SynthProfile& profile = {});

}  // namespace sentinel
