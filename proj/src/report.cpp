// SPDX-License-Identifier: Apache-2.0
#include "tsiars/report.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "tsiars/config.hpp"
#include "tsiars/error.hpp"

namespace tsiars::report {

using nlohmann::json;

namespace {

json slot_map(const std::map<std::size_t, double>& m) {
  json out = json::object();
  for (const auto& [k, v] : m) out[std::to_string(k)] = v;
  return out;
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::logic_error("failed to format value");
  return std::string(buf, end);
}

}  // namespace

json to_json(const trainer::RunReport& r) {
  json epochs = json::array();
  for (const auto& e : r.epochs) {
    json rec{
        {"epoch", e.epoch},
        {"seconds", e.seconds},
        {"objective", e.objective},
        {"slot_losses", slot_map(e.slot_losses)},
        {"first_batch_losses", slot_map(e.first_batch_losses)},
        {"present_slots", e.present_slots},
        {"batches", e.batches},
        {"backward_passes", e.backward_passes},
        {"tracked_loss_heads", e.tracked_loss_heads},
        {"fallback_batches", e.fallback_batches},
    };
    rec["selected"] = e.selected ? json(*e.selected) : json(nullptr);
    json dist = json::array();
    for (const auto& s : e.distribution) {
      dist.push_back({{"slot", s.slot},
                      {"loss", s.loss ? json(*s.loss) : json(nullptr)},
                      {"delta", s.delta},
                      {"probability", s.probability},
                      {"selected", s.selected}});
    }
    rec["distribution"] = std::move(dist);
    epochs.push_back(std::move(rec));
  }
  return json{
      {"config", config::to_json(r.config)},
      {"dataset", r.dataset},
      {"instances", r.instances},
      {"dims", r.dims},
      {"length", r.length},
      {"epochs", std::move(epochs)},
      {"training_seconds", r.training_seconds},
      {"mean_epoch_seconds", r.mean_epoch_seconds()},
      {"backward_passes", r.backward_passes},
      {"tracked_loss_heads", r.tracked_loss_heads},
      {"environment",
       {{"threads", r.environment.threads},
        {"precision", r.environment.precision},
        {"compiler", r.environment.compiler},
        {"hardware_concurrency", r.environment.hardware_concurrency}}},
      {"metrics", r.metrics},
  };
}

std::string epochs_csv(const trainer::RunReport& r) {
  std::ostringstream os;
  os << "epoch,slot,loss,delta,probability,selected,seconds\n";
  for (const auto& e : r.epochs) {
    if (!e.distribution.empty()) {
      for (const auto& s : e.distribution) {
        os << e.epoch << ',' << s.slot << ',' << (s.loss ? fmt(*s.loss) : "") << ',' << fmt(s.delta) << ','
           << fmt(s.probability) << ',' << (s.selected ? 1 : 0) << ',' << fmt(e.seconds) << '\n';
      }
    } else {
      for (const auto& [k, loss] : e.slot_losses) {
        os << e.epoch << ',' << k << ',' << fmt(loss) << ",,," << (e.selected && *e.selected == k ? 1 : 0) << ','
           << fmt(e.seconds) << '\n';
      }
    }
  }
  return os.str();
}

void write(const std::filesystem::path& dir, const trainer::RunReport& r) {
  std::filesystem::create_directories(dir);
  std::ofstream js(dir / "report.json");
  std::ofstream csv(dir / "epochs.csv");
  if (!js || !csv) throw DataError("cannot write report files into " + dir.string());
  js << to_json(r).dump(2) << '\n';
  csv << epochs_csv(r);
}

}  // namespace tsiars::report
