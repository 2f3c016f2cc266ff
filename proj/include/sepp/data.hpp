#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

namespace sepp {

// A = unlabeled source, B = labeled source.
enum class Source { A, B };

char to_char(Source s);

struct EventRecord {
  std::int64_t id = 0;
  double t = 0.0;  // days, or abstract units for synthetic data
  double x = 0.0;
  double y = 0.0;
  Source source = Source::A;
  std::optional<int> mark;
};

// Space-time observation window S x [t0, t1].
struct Window {
  double t0 = 0.0, t1 = 1.0;
  double x0 = 0.0, x1 = 1.0;
  double y0 = 0.0, y1 = 1.0;

  void validate() const;
  bool contains(const EventRecord& e) const;
  double duration() const { return t1 - t0; }
  double area() const { return (x1 - x0) * (y1 - y0); }
  double volume() const { return duration() * area(); }
  double diagonal() const;
};

// Time-sorted events (ties by id) with group count K. Immutable once built.
class MarkedDataset {
 public:
  MarkedDataset() = default;
  MarkedDataset(std::vector<EventRecord> events, Window window, int K);

  std::span<const EventRecord> events() const { return events_; }
  const EventRecord& operator[](std::size_t i) const { return events_[i]; }
  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }
  const Window& window() const { return window_; }
  int K() const { return K_; }

  std::size_t count(Source s) const;

  // Events of one source, same window and K.
  MarkedDataset only(Source s) const;
  // Copy with a different window (events re-validated against it).
  MarkedDataset with_window(const Window& w) const;

 private:
  std::vector<EventRecord> events_;
  Window window_;
  int K_ = 1;
};

// Smallest window containing every event, anchored at t0 = 0 unless events
// precede it. `horizon` overrides t1 when given.
Window bounding_window(std::span<const EventRecord> events,
                       std::optional<double> horizon = std::nullopt);

// id -> group labels, e.g. produced by NMF clustering of the labeled source.
using LabelMap = std::unordered_map<std::int64_t, int>;

// Events CSV: header `id,t,x,y,source,group`; group blank for source A.
// Labels, when given, fill in blank groups of B rows by id.
MarkedDataset parse_events(std::istream& in, const Window& window, int K,
                           const LabelMap* labels = nullptr);
MarkedDataset load_events(const std::filesystem::path& path,
                          const Window& window, int K,
                          const LabelMap* labels = nullptr);

// Reads the rows only; used to derive a window before validation.
std::vector<EventRecord> read_event_rows(const std::filesystem::path& path,
                                         const LabelMap* labels = nullptr);

// `hide_marks` blanks the group of A events (true marks stay in memory only).
void write_events(std::ostream& out, std::span<const EventRecord> events,
                  bool hide_marks = true);
void save_events(const std::filesystem::path& path,
                 std::span<const EventRecord> events, bool hide_marks = true);

// Labels CSV: `id,group`.
LabelMap load_labels(const std::filesystem::path& path);

}  // namespace sepp
