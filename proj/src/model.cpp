#include "sepp/model.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sepp/error.hpp"

namespace sepp {

using nlohmann::json;

namespace {

json window_json(const Window& w) {
  return {{"t0", w.t0}, {"t1", w.t1}, {"x0", w.x0}, {"x1", w.x1}, {"y0", w.y0}, {"y1", w.y1}};
}

Window window_from(const json& j) {
  Window w;
  w.t0 = j.at("t0").get<double>();
  w.t1 = j.at("t1").get<double>();
  w.x0 = j.at("x0").get<double>();
  w.x1 = j.at("x1").get<double>();
  w.y0 = j.at("y0").get<double>();
  w.y1 = j.at("y1").get<double>();
  w.validate();
  return w;
}

}  // namespace

std::string model_to_json(const FittedModel& model) {
  json doc;
  doc["format_version"] = kModelFormatVersion;
  doc["K"] = model.K();
  doc["window"] = window_json(model.window);
  doc["fused"] = model.fused;
  doc["share_a"] = model.share_a;
  doc["share_b"] = model.share_b;
  doc["warnings"] = model.warnings;
  doc["trace"] = {{"iterations", model.trace.iterations},
                  {"converged", model.trace.converged},
                  {"deltas", model.trace.deltas}};
  json groups = json::array();
  for (const auto& g : model.groups) {
    json pts = json::array();
    for (const auto& p : g.background.points())
      pts.push_back({{"t", p.t}, {"x", p.x}, {"y", p.y}, {"w", p.w}, {"id", p.id}});
    groups.push_back({{"K0", g.trigger.K0},
                      {"omega", g.trigger.omega},
                      {"sigma", g.trigger.sigma},
                      {"mu0", g.mu0},
                      {"b1", g.background.b1()},
                      {"b2", g.background.b2()},
                      {"uniform_background", g.uniform_background},
                      {"empty", g.empty},
                      {"background_points", std::move(pts)}});
  }
  doc["groups"] = std::move(groups);
  json assignments = json::array();
  for (const auto& a : model.assignments)
    assignments.push_back({{"id", a.id}, {"group", a.group}, {"prob", a.prob}, {"resp", a.resp}});
  doc["assignments"] = std::move(assignments);
  return doc.dump(1);
}

FittedModel model_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("model file is not valid JSON (truncated?): ") + e.what());
  }
  try {
    if (!doc.contains("format_version")) throw Error("model file has no format_version");
    const int version = doc.at("format_version").get<int>();
    if (version != kModelFormatVersion)
      throw Error("unsupported model format_version " + std::to_string(version) +
                  " (expected " + std::to_string(kModelFormatVersion) + ")");
    FittedModel m;
    const int K = doc.at("K").get<int>();
    m.window = window_from(doc.at("window"));
    m.fused = doc.value("fused", false);
    m.share_a = doc.value("share_a", 1.0);
    m.share_b = doc.value("share_b", 1.0);
    m.warnings = doc.value("warnings", std::size_t{0});
    if (doc.contains("trace")) {
      const auto& t = doc["trace"];
      m.trace.iterations = t.value("iterations", 0);
      m.trace.converged = t.value("converged", false);
      m.trace.deltas = t.value("deltas", std::vector<double>{});
    }
    for (const auto& g : doc.at("groups")) {
      GroupParams gp;
      gp.trigger.K0 = g.at("K0").get<double>();
      gp.trigger.omega = g.at("omega").get<double>();
      gp.trigger.sigma = g.at("sigma").get<double>();
      gp.mu0 = g.at("mu0").get<double>();
      gp.uniform_background = g.value("uniform_background", false);
      gp.empty = g.value("empty", false);
      std::vector<SupportPoint> pts;
      for (const auto& p : g.at("background_points"))
        pts.push_back({p.at("t").get<double>(), p.at("x").get<double>(), p.at("y").get<double>(),
                       p.at("w").get<double>(), p.value("id", std::int64_t{-1})});
      gp.background = KdeBackground(std::move(pts), g.at("b1").get<double>(),
                                    g.at("b2").get<double>());
      m.groups.push_back(std::move(gp));
    }
    if (m.K() != K) throw Error("model K does not match its group list");
    for (const auto& a : doc.at("assignments")) {
      MarkAssignment ma;
      ma.id = a.at("id").get<std::int64_t>();
      ma.group = a.at("group").get<int>();
      ma.prob = a.at("prob").get<double>();
      ma.resp = a.value("resp", std::vector<double>{});
      if (ma.group < 0 || ma.group >= K) throw Error("assignment group out of range");
      m.assignments.push_back(std::move(ma));
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed model file: ") + e.what());
  }
}

void save_model(const FittedModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << model_to_json(model) << '\n';
}

FittedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace sepp
