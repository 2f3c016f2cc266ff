#include "sepp/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <unordered_set>

#include "csv.hpp"
#include "sepp/error.hpp"

namespace sepp {

char to_char(Source s) { return s == Source::A ? 'A' : 'B'; }

void Window::validate() const {
  const bool finite = std::isfinite(t0) && std::isfinite(t1) && std::isfinite(x0) &&
                      std::isfinite(x1) && std::isfinite(y0) && std::isfinite(y1);
  if (!finite || !(t1 > t0) || !(x1 > x0) || !(y1 > y0))
    throw Error("invalid window: bounds must be finite with t1 > t0, x1 > x0, y1 > y0");
}

bool Window::contains(const EventRecord& e) const {
  return e.t >= t0 && e.t <= t1 && e.x >= x0 && e.x <= x1 && e.y >= y0 && e.y <= y1;
}

double Window::diagonal() const { return std::hypot(x1 - x0, y1 - y0); }

MarkedDataset::MarkedDataset(std::vector<EventRecord> events, Window window, int K)
    : events_(std::move(events)), window_(window), K_(K) {
  window_.validate();
  if (K_ < 1) throw Error("group count K must be at least 1");
  std::unordered_set<std::int64_t> ids;
  ids.reserve(events_.size());
  for (const auto& e : events_) {
    if (!std::isfinite(e.t) || !std::isfinite(e.x) || !std::isfinite(e.y))
      throw Error("event " + std::to_string(e.id) + ": non-finite coordinate");
    if (!window_.contains(e))
      throw Error("event " + std::to_string(e.id) + ": event outside window");
    if (e.source == Source::B && !e.mark)
      throw Error("event " + std::to_string(e.id) + ": labeled event without group");
    if (e.mark && (*e.mark < 0 || *e.mark >= K_))
      throw Error("event " + std::to_string(e.id) + ": group " +
                  std::to_string(*e.mark) + " out of range for K=" + std::to_string(K_));
    if (!ids.insert(e.id).second)
      throw Error("duplicate event id " + std::to_string(e.id));
  }
  std::sort(events_.begin(), events_.end(), [](const EventRecord& a, const EventRecord& b) {
    return a.t != b.t ? a.t < b.t : a.id < b.id;
  });
}

std::size_t MarkedDataset::count(Source s) const {
  return static_cast<std::size_t>(std::count_if(
      events_.begin(), events_.end(), [s](const EventRecord& e) { return e.source == s; }));
}

MarkedDataset MarkedDataset::only(Source s) const {
  std::vector<EventRecord> kept;
  for (const auto& e : events_)
    if (e.source == s) kept.push_back(e);
  return MarkedDataset(std::move(kept), window_, K_);
}

MarkedDataset MarkedDataset::with_window(const Window& w) const {
  return MarkedDataset(events_, w, K_);
}

Window bounding_window(std::span<const EventRecord> events, std::optional<double> horizon) {
  Window w;
  if (events.empty()) {
    if (horizon) w.t1 = *horizon;
    return w;
  }
  double tmin = 0.0, tmax = -std::numeric_limits<double>::infinity();
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& e : events) {
    tmin = std::min(tmin, e.t);
    tmax = std::max(tmax, e.t);
    xmin = std::min(xmin, e.x);
    xmax = std::max(xmax, e.x);
    ymin = std::min(ymin, e.y);
    ymax = std::max(ymax, e.y);
  }
  w.t0 = tmin;
  w.t1 = horizon ? std::max(*horizon, tmax) : tmax;
  if (!(w.t1 > w.t0)) w.t1 = w.t0 + 1.0;
  w.x0 = xmin;
  w.x1 = xmax > xmin ? xmax : xmin + 1.0;
  w.y0 = ymin;
  w.y1 = ymax > ymin ? ymax : ymin + 1.0;
  return w;
}

namespace {

std::vector<EventRecord> read_rows(std::istream& in, const LabelMap* labels) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw Error("events file is empty (missing header)");
  ++line_no;
  const auto header = csv::split(line);
  static const char* expected[] = {"id", "t", "x", "y", "source", "group"};
  if (header.size() != 6 ||
      !std::equal(header.begin(), header.end(), std::begin(expected)))
    csv::fail_at(line_no, "expected header id,t,x,y,source,group");

  std::vector<EventRecord> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != 6) csv::fail_at(line_no, "expected 6 fields, got " + std::to_string(f.size()));
    EventRecord e;
    if (!csv::parse_int(f[0], e.id)) csv::fail_at(line_no, "bad id");
    if (!csv::parse_double(f[1], e.t)) csv::fail_at(line_no, "bad t");
    if (!csv::parse_double(f[2], e.x)) csv::fail_at(line_no, "bad x");
    if (!csv::parse_double(f[3], e.y)) csv::fail_at(line_no, "bad y");
    if (f[4] == "A") {
      e.source = Source::A;
    } else if (f[4] == "B") {
      e.source = Source::B;
    } else {
      csv::fail_at(line_no, "source must be A or B");
    }
    if (!f[5].empty()) {
      int g = 0;
      if (!csv::parse_int(f[5], g) || g < 0) csv::fail_at(line_no, "bad group");
      if (e.source == Source::A) csv::fail_at(line_no, "unlabeled (A) row must leave group blank");
      e.mark = g;
    } else if (e.source == Source::B && labels) {
      if (auto it = labels->find(e.id); it != labels->end()) e.mark = it->second;
    }
    if (e.source == Source::B && !e.mark) csv::fail_at(line_no, "labeled (B) row has no group");
    rows.push_back(e);
  }
  return rows;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

}  // namespace

MarkedDataset parse_events(std::istream& in, const Window& window, int K,
                           const LabelMap* labels) {
  auto rows = read_rows(in, labels);
  window.validate();
  // Report positions in file terms before handing over to the dataset checks.
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& e = rows[i];
    if (!window.contains(e)) csv::fail_at(i + 2, "event outside window");
    if (e.mark && *e.mark >= K)
      csv::fail_at(i + 2, "group " + std::to_string(*e.mark) + " >= K=" + std::to_string(K));
  }
  return MarkedDataset(std::move(rows), window, K);
}

MarkedDataset load_events(const std::filesystem::path& path, const Window& window, int K,
                          const LabelMap* labels) {
  auto in = open_input(path);
  return parse_events(in, window, K, labels);
}

std::vector<EventRecord> read_event_rows(const std::filesystem::path& path,
                                         const LabelMap* labels) {
  auto in = open_input(path);
  return read_rows(in, labels);
}

void write_events(std::ostream& out, std::span<const EventRecord> events, bool hide_marks) {
  out << "id,t,x,y,source,group\n";
  for (const auto& e : events) {
    out << e.id << ',' << csv::format_double(e.t) << ',' << csv::format_double(e.x) << ','
        << csv::format_double(e.y) << ',' << to_char(e.source) << ',';
    if (e.mark && !(hide_marks && e.source == Source::A)) out << *e.mark;
    out << '\n';
  }
}

void save_events(const std::filesystem::path& path, std::span<const EventRecord> events,
                 bool hide_marks) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_events(out, events, hide_marks);
}

LabelMap load_labels(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw Error("labels file is empty (missing header)");
  const auto header = csv::split(line);
  if (header.size() != 2 || header[0] != "id" || header[1] != "group")
    csv::fail_at(line_no, "expected header id,group");
  LabelMap labels;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    std::int64_t id = 0;
    int g = 0;
    if (f.size() != 2 || !csv::parse_int(f[0], id) || !csv::parse_int(f[1], g) || g < 0)
      csv::fail_at(line_no, "malformed label row");
    if (!labels.emplace(id, g).second) csv::fail_at(line_no, "duplicate id");
  }
  return labels;
}

}  // namespace sepp
