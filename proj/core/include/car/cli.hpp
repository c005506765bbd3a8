#pragma once
#include <optional>
#include <string>
#include <vector>

#include "car/train.hpp"

namespace car {

struct MetricsRecord {
  std::string dataset;
  TrainConfig cfg;
  double test_accuracy = 0.0;
  double test_loss = 0.0;
  std::optional<double> mean_kl;
  std::size_t epochs_run = 0;
  double wall_clock_seconds = 0.0;
};

// One JSON object per line. Key order and number formatting are stable, so
// identical runs emit identical bytes apart from wall_clock_seconds.
std::string metrics_record_json(const MetricsRecord& r);

// Entry point behind the `car` binary; args exclude argv[0].
// Exit codes: 0 success, 1 usage, 2 bad data, 3 numeric failure.
int run_commands(const std::vector<std::string>& args);

}  // namespace car
