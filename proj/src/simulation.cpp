#include "tar/simulation.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>

namespace tar {

using nlohmann::json;

namespace {

constexpr double kTimeEps = 1e-9;

json vec_json(const Vec2& v) { return json::array({v.x(), v.y()}); }
json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

std::shared_ptr<const DescriptorModel> build_model(const Scenario& s) {
  int max_class = 0;
  std::map<std::uint32_t, int> instances;
  for (const auto& o : s.objects) {
    max_class = std::max(max_class, o.class_id);
    instances[o.instance_id] = o.class_id;
  }
  DescriptorModelConfig cfg = s.descriptors;
  cfg.noise_seed = mix_seed(s.seed, 0x6e6f697365ULL);
  return std::make_shared<const DescriptorModel>(cfg, max_class, instances);
}

bool uses_level_two(const Scenario& s) {
  if (s.redetect_level == 2) return true;
  return std::any_of(s.events.begin(), s.events.end(), [](const TimedEvent& e) {
    const auto* l = std::get_if<SetRedetectLevel>(&e.event);
    return l && l->level == 2;
  });
}

bool has_scripted_answers(const Scenario& s) {
  return std::any_of(s.events.begin(), s.events.end(),
                     [](const TimedEvent& e) { return std::holds_alternative<HumanAnswer>(e.event); });
}

bool is_track_event(const Event& e) {
  return std::holds_alternative<SubmitQuery>(e) || std::holds_alternative<HumanAnswer>(e);
}

bool recovering(TrackStatus s) {
  return s == TrackStatus::Lost || s == TrackStatus::Redetecting || s == TrackStatus::AwaitingHuman;
}

std::string_view transition_name(TransitionKind k) {
  switch (k) {
    case TransitionKind::None: return "";
    case TransitionKind::Acquired: return "acquired";
    case TransitionKind::Lost: return "lost";
    case TransitionKind::Reacquired: return "reacquired";
  }
  return "";
}

}  // namespace

Simulation::Simulation(Scenario scenario) : Simulation(std::move(scenario), Options{}) {}

Simulation::Simulation(Scenario scenario, Options options)
    : scenario_(std::move(scenario)),
      options_(options),
      servo_(scenario_.gains, ServoFilter(scenario_.filter_b, scenario_.filter_a), scenario_.servo),
      controller_(scenario_.plant) {
  scenario_.validate();
  if (options_.headless && uses_level_two(scenario_) && !has_scripted_answers(scenario_))
    throw ConfigError("re-detection level 2 needs scripted human_answer events in headless runs");
  model_ = build_model(scenario_);
  world_.objects = scenario_.objects;
  for (auto& o : world_.objects) o.position = o.motion.position_at(0.0);
  world_.drone = scenario_.drone;
  world_.drone.psi = wrap_angle(world_.drone.psi);
  track_.bank = DescriptorBank(scenario_.bank_tau);
  track_.redetect_level = scenario_.redetect_level;
}

json Simulation::header() const {
  return {{"type", "header"},
          {"version", kVersion},
          {"scenario", scenario_.name},
          {"scenario_hash", scenario_hash(scenario_)},
          {"seed", scenario_.seed},
          {"dt", scenario_.dt},
          {"ticks", scenario_.num_ticks()},
          {"target_id", scenario_.target_id},
          {"prototype_seed", model_->prototype_seed()},
          {"case",
           {{"target", scenario_.case_label.target},
            {"algorithm", scenario_.case_label.algorithm},
            {"modality", scenario_.case_label.modality},
            {"obstruction", scenario_.case_label.obstruction}}}};
}

std::optional<std::string> Simulation::apply_world_event(const Event& e) {
  if (const auto* o = std::get_if<OccludeStart>(&e)) {
    SceneObject* obj = world_.find(o->object);
    if (!obj) return "unknown object";
    obj->visible = true;
  } else if (const auto* o = std::get_if<OccludeEnd>(&e)) {
    SceneObject* obj = world_.find(o->object);
    if (!obj) return "unknown object";
    obj->visible = false;
  } else if (const auto* l = std::get_if<SetRedetectLevel>(&e)) {
    if (l->level < 1 || l->level > 3) return "redetect level must be 1, 2 or 3";
    track_.redetect_level = l->level;
    // Leaving level 2 hands the pending request back to automatic recovery.
    if (l->level != 2 && track_.status == TrackStatus::AwaitingHuman) track_.status = TrackStatus::Redetecting;
  } else if (const auto* n = std::get_if<AssistNudge>(&e)) {
    try {
      controller_.assist(world_.drone, n->nudge);
    } catch (const ConfigError& err) {
      return std::string(err.what());
    }
  } else if (std::holds_alternative<AssistResume>(e)) {
    if (controller_.mode() != OffboardMode::PositionAssist) return "not in position assist";
    controller_.resume();
  } else if (std::holds_alternative<ResetTrack>(e)) {
    TrackState fresh;
    fresh.bank = DescriptorBank(scenario_.bank_tau);
    fresh.redetect_level = track_.redetect_level;
    track_ = std::move(fresh);
  }
  return std::nullopt;
}

void Simulation::start_query(const Query& q, const RegionSet& regions) {
  const ResolvedQuery r = resolve_query(regions, q);
  TrackState fresh;
  fresh.bank = DescriptorBank(scenario_.bank_tau);
  fresh.redetect_level = track_.redetect_level;
  fresh.query_descriptor = r.descriptor;
  std::optional<std::size_t> region = r.region;
  if (!region) {
    const std::array<Descriptor, 1> queries{r.descriptor};
    region = detect(regions, queries, scenario_.detect_threshold).best[0];
  }
  if (region) {
    fresh = acquire(std::move(fresh), regions, *region);
  } else {
    fresh.status = TrackStatus::Redetecting;
  }
  track_ = std::move(fresh);
}

std::optional<std::string> Simulation::apply_track_event(const Event& e, const RegionSet& regions,
                                                         std::optional<Query>& human_answer) {
  try {
    if (const auto* q = std::get_if<SubmitQuery>(&e)) {
      // A click or box while a human is being asked is the human's answer.
      if (track_.status == TrackStatus::AwaitingHuman && !std::holds_alternative<TemplateQuery>(q->query)) {
        resolve_query(regions, q->query);
        human_answer = q->query;
        return std::nullopt;
      }
      start_query(q->query, regions);
      return std::nullopt;
    }
    if (const auto* h = std::get_if<HumanAnswer>(&e)) {
      if (!recovering(track_.status)) return "no re-detection pending";
      if (std::holds_alternative<TemplateQuery>(h->answer)) return "human answer must be a click or a bounding box";
      resolve_query(regions, h->answer);
      human_answer = h->answer;
    }
  } catch (const QueryError& err) {
    return std::string(err.what());
  } catch (const ConfigError& err) {
    return std::string(err.what());
  }
  return std::nullopt;
}

json Simulation::step(std::span<const Event> external, std::vector<EventOutcome>* outcomes) {
  if (finished()) throw RunAborted("simulation already finished");
  if (stall_) throw RunAborted(*stall_);
  const double t = world_.t;
  const double dt = scenario_.dt;

  // Collect this tick's events: the initial query, scripted events, then
  // external ones.
  std::vector<std::pair<Event, bool>> due;  // (event, external)
  if (scenario_.query && !query_issued_ && scenario_.query->t <= t + kTimeEps) {
    due.emplace_back(scenario_.query->event, false);
    query_issued_ = true;
  }
  while (next_event_ < scenario_.events.size() && scenario_.events[next_event_].t <= t + kTimeEps)
    due.emplace_back(scenario_.events[next_event_++].event, false);
  for (const auto& e : external) due.emplace_back(e, true);

  std::vector<std::optional<std::string>> errors(due.size());
  for (std::size_t k = 0; k < due.size(); ++k)
    if (!is_track_event(due[k].first)) errors[k] = apply_world_event(due[k].first);

  // Perceive.
  frame_ = render_frame(world_, scenario_.camera, model_);
  SplitMix64 seg_rng(mix_seed(mix_seed(scenario_.seed, 0x736567ULL), frame_.seq()));
  RegionSet regions(frame_, segment(frame_, scenario_.segmentation, seg_rng));

  const TrackStatus status_before_events = track_.status;
  std::optional<Query> human_answer;
  for (std::size_t k = 0; k < due.size(); ++k)
    if (is_track_event(due[k].first)) errors[k] = apply_track_event(due[k].first, regions, human_answer);
  const bool acquired_by_query =
      track_.status == TrackStatus::Tracking && status_before_events != TrackStatus::Tracking && !human_answer;

  // Track.
  TrackUpdate update;
  try {
    update = process_frame(track_, regions, scenario_.tracker, human_answer);
  } catch (const QueryError& err) {
    // Already resolved above, so this is unreachable in practice; keep the
    // state and report it against the answer.
    update = process_frame(track_, regions, scenario_.tracker);
    for (std::size_t k = 0; k < due.size(); ++k)
      if (std::holds_alternative<HumanAnswer>(due[k].first)) errors[k] = err.what();
  }
  const TrackStatus before = track_.status;
  track_ = std::move(update.state);
  TransitionKind transition = update.transition;
  if (acquired_by_query && transition == TransitionKind::None) transition = TransitionKind::Acquired;

  json events = json::array();
  for (std::size_t k = 0; k < due.size(); ++k) {
    json ej = event_to_json(due[k].first);
    if (errors[k]) ej["error"] = *errors[k];
    events.push_back(std::move(ej));
  }
  if (outcomes) {
    outcomes->clear();
    for (std::size_t k = 0; k < due.size(); ++k)
      if (due[k].second) outcomes->push_back({due[k].first, errors[k]});
  }

  // Level-2 bookkeeping: one request per wait, then an answer or a timeout.
  if (track_.status == TrackStatus::AwaitingHuman && before != TrackStatus::AwaitingHuman) {
    awaiting_since_ = t;
    timeout_logged_ = false;
    events.push_back({{"type", "redetect_request"}, {"seq", frame_.seq()}});
  }
  if (track_.status != TrackStatus::AwaitingHuman) awaiting_since_.reset();
  bool stalled = false;
  if (awaiting_since_ && !timeout_logged_ && t - *awaiting_since_ > scenario_.human_timeout) {
    events.push_back({{"type", "redetect_timeout"}, {"waited", t - *awaiting_since_}});
    timeout_logged_ = true;
    stalled = options_.headless;
  }

  // Servo and controller.
  std::optional<Vec2> centroid;
  std::optional<double> area;
  if (track_.status == TrackStatus::Tracking && track_.current_mask) {
    centroid = track_.current_mask->centroid();
    area = static_cast<double>(track_.current_mask->pixel_count());
  }
  const ControlSignal u = servo_.step(track_.status, centroid, scenario_.camera, area);
  const bool engaged = track_.status == TrackStatus::Tracking;
  const TrajectorySetpoint sp = controller_.tick(world_.drone, u, engaged, dt, t);

  const SceneObject* target = world_.find(scenario_.target_id);
  json record = {
      {"type", "tick"},
      {"tick", world_.tick},
      {"t", t},
      {"seq", frame_.seq()},
      {"drone", {{"p", vec_json(world_.drone.p)}, {"psi", world_.drone.psi}, {"v", vec_json(world_.drone.v)}}},
      {"target", target ? vec_json(target->position) : json(nullptr)},
      {"status", std::string(to_string(track_.status))},
      {"transition", std::string(transition_name(transition))},
      {"centroid", centroid ? vec_json(*centroid) : json(nullptr)},
      {"area", area ? json(*area) : json(nullptr)},
      {"track_instance", track_.current_mask ? track_.current_mask->source_instance() : 0u},
      {"similarity", track_.similarity},
      {"iteration", track_.iteration},
      {"bank_size", track_.bank.size()},
      {"bank_stored", update.bank_stored},
      {"regions", regions.size()},
      {"u",
       {{"vx", u.vx}, {"vy", u.vy}, {"vz", u.vz}, {"yaw_rate", u.yaw_rate}, {"reset", u.reset}}},
      {"setpoint", {{"p", vec_json(sp.p_target)}, {"v", vec_json(sp.v_target)}, {"psi", sp.psi_target}}},
      {"mode", std::string(to_string(controller_.mode()))},
      {"heartbeat", controller_.state().heartbeat_count},
      {"events", std::move(events)},
  };

  // Plant and world.
  const DroneState next = plant_step(world_.drone, sp, dt, scenario_.plant);
  world_ = step_world(std::move(world_), dt);
  world_.drone = next;

  if (stalled) {
    std::ostringstream msg;
    msg << "level-2 re-detection unanswered for more than " << scenario_.human_timeout << " s at t = " << t;
    stall_ = msg.str();
  }
  return record;
}

RunLog run_headless(const Scenario& scenario, std::ostream* out) {
  Simulation sim(scenario);
  RunLog log;
  log.header = sim.header();
  if (out) *out << log.header.dump() << '\n';
  log.records.reserve(sim.num_ticks());
  while (!sim.finished()) {
    log.records.push_back(sim.step());
    if (out) *out << log.records.back().dump() << '\n';
    if (sim.stall()) {
      if (out) out->flush();
      throw RunAborted(*sim.stall());
    }
  }
  return log;
}

void write_jsonl(const RunLog& log, std::ostream& out) {
  out << log.header.dump() << '\n';
  for (const auto& r : log.records) out << r.dump() << '\n';
}

RunLog read_jsonl(std::istream& in) {
  RunLog log;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ConfigError("log line " + std::to_string(n) + " is not JSON: " + e.what());
    }
    if (j.value("type", "") == "header") {
      log.header = std::move(j);
    } else {
      log.records.push_back(std::move(j));
    }
  }
  return log;
}

std::pair<Trajectory, Trajectory> run_trajectories(const RunLog& log, bool xyz) {
  Trajectory drone;
  Trajectory target;
  for (const auto& r : log.records) {
    if (r.value("type", "") != "tick") continue;
    if (!r.contains("target") || r.at("target").is_null())
      throw ConfigError("log record at tick " + std::to_string(r.value("tick", 0)) + " has no target ground truth");
    const double t = r.at("t").get<double>();
    const auto& p = r.at("drone").at("p");
    const auto& g = r.at("target");
    drone.push_back(t, Vec3(p[0].get<double>(), p[1].get<double>(), xyz ? p[2].get<double>() : 0.0));
    target.push_back(t, Vec3(g[0].get<double>(), g[1].get<double>(), 0.0));
  }
  if (drone.empty()) throw ConfigError("log has no tick records");
  return {std::move(drone), std::move(target)};
}

DtwReport evaluate_run(const RunLog& log, const EvalOptions& options) {
  auto [drone, target] = run_trajectories(log, options.xyz);
  if (options.resample_dt > 0.0) {
    drone = resample(drone, options.resample_dt);
    target = resample(target, options.resample_dt);
  }
  DtwReport r = dtw_fast(drone, target, options.radius);
  if (log.header.contains("case")) {
    const auto& c = log.header.at("case");
    r.case_name = case_name(c.value("target", "target"), c.value("algorithm", "fan"), c.value("modality", "dino"),
                            c.value("obstruction", "no"));
  }
  return r;
}

Trajectory read_csv_trajectory(std::istream& in) {
  Trajectory traj;
  std::string line;
  std::vector<std::string> names;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);

    std::vector<double> values;
    bool numeric = true;
    for (const auto& c : cells) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(c, &used));
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (traj.empty() && names.empty()) {
        names = cells;
        continue;
      }
      throw ConfigError("non-numeric CSV row: " + line);
    }
    if (names.empty()) {
      // Positional layout: x,y | t,x,y | t,x,y,z.
      if (values.size() == 2) names = {"x", "y"};
      else if (values.size() == 3) names = {"t", "x", "y"};
      else if (values.size() == 4) names = {"t", "x", "y", "z"};
      else throw ConfigError("CSV trajectory rows need 2 to 4 columns");
    }
    if (values.size() != names.size()) throw ConfigError("ragged CSV row: " + line);
    double t = static_cast<double>(row);
    Vec3 p = Vec3::Zero();
    for (std::size_t k = 0; k < names.size(); ++k) {
      if (names[k] == "t") t = values[k];
      else if (names[k] == "x") p.x() = values[k];
      else if (names[k] == "y") p.y() = values[k];
      else if (names[k] == "z") p.z() = values[k];
    }
    traj.push_back(t, p);
    ++row;
  }
  traj.validate();
  return traj;
}

}  // namespace tar
