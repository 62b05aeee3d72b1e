#include "tar/stream.hpp"

#include <cmath>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <sodium.h>

namespace tar {

using nlohmann::json;

Encoding parse_encoding(std::string_view name) {
  if (name == "png") return Encoding::Png;
  if (name == "jpeg" || name == "jpg") return Encoding::Jpeg;
  throw ConfigError("unknown frame encoding '" + std::string(name) + "'");
}

std::string_view to_string(Encoding e) { return e == Encoding::Png ? "png" : "jpeg"; }

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  const int variant = sodium_base64_VARIANT_ORIGINAL;
  std::string out(sodium_base64_encoded_len(bytes.size(), variant), '\0');
  sodium_bin2base64(out.data(), out.size(), bytes.data(), bytes.size(), variant);
  out.pop_back();  // trailing NUL
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  std::vector<std::uint8_t> out(text.size() / 4 * 3 + 3);
  std::size_t len = 0;
  const char* end = nullptr;
  if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), nullptr, &len, &end,
                        sodium_base64_VARIANT_ORIGINAL) != 0 ||
      end != text.data() + text.size())
    throw ConfigError("malformed base64 payload");
  out.resize(len);
  return out;
}

std::vector<std::uint8_t> encode_image(const Frame& frame, const EncodeOptions& options) {
  if (!(options.scale > 0.0)) throw ConfigError("frame scale must be positive");
  cv::Mat img(frame.height(), frame.width(), CV_8UC1, const_cast<std::uint8_t*>(frame.render().data()));
  cv::Mat out = img;
  if (options.scale != 1.0) {
    const int w = std::max(1, static_cast<int>(std::lround(frame.width() * options.scale)));
    const int h = std::max(1, static_cast<int>(std::lround(frame.height() * options.scale)));
    cv::resize(img, out, cv::Size(w, h), 0.0, 0.0, cv::INTER_NEAREST);
  }
  std::vector<std::uint8_t> bytes;
  if (options.encoding == Encoding::Png) {
    cv::imencode(".png", out, bytes, {cv::IMWRITE_PNG_COMPRESSION, 1});
  } else {
    cv::imencode(".jpg", out, bytes, {cv::IMWRITE_JPEG_QUALITY, options.jpeg_quality});
  }
  return bytes;
}

std::string encode_frame(const Frame& frame, const EncodeOptions& options) {
  return base64_encode(encode_image(frame, options));
}

GrayImage decode_frame(std::string_view base64) {
  const std::vector<std::uint8_t> bytes = base64_decode(base64);
  const cv::Mat img = cv::imdecode(bytes, cv::IMREAD_GRAYSCALE);
  if (img.empty()) throw ConfigError("payload is not a decodable image");
  GrayImage g;
  g.width = img.cols;
  g.height = img.rows;
  g.pixels.assign(img.begin<std::uint8_t>(), img.end<std::uint8_t>());
  return g;
}

std::vector<std::vector<std::pair<int, int>>> mask_outline(const Mask& mask) {
  std::vector<std::vector<std::pair<int, int>>> out;
  if (mask.empty()) return out;
  std::vector<std::uint8_t> dense = mask.to_dense();
  cv::Mat img(mask.height(), mask.width(), CV_8UC1, dense.data());
  std::vector<std::vector<cv::Point>> contours;
  cv::findContours(img, contours, cv::RETR_CCOMP, cv::CHAIN_APPROX_SIMPLE);
  for (const auto& c : contours) {
    std::vector<std::pair<int, int>> poly;
    poly.reserve(c.size());
    for (const auto& p : c) poly.emplace_back(p.x, p.y);
    out.push_back(std::move(poly));
  }
  return out;
}

json frame_message(const Frame& frame, const TrackState& track, const EncodeOptions& options) {
  json overlay = {{"status", std::string(to_string(track.status))}, {"similarity", track.similarity}};
  if (track.current_mask) {
    const PixelBox& b = track.current_mask->bbox();
    overlay["bbox"] = {b.x0, b.y0, b.x1, b.y1};
    overlay["outline"] = mask_outline(*track.current_mask);
  } else {
    overlay["bbox"] = nullptr;
    overlay["outline"] = json::array();
  }
  const double s = options.scale;
  return {{"type", "frame"},
          {"seq", frame.seq()},
          {"t", frame.t()},
          {"W", static_cast<int>(std::lround(frame.width() * s))},
          {"H", static_cast<int>(std::lround(frame.height() * s))},
          {"scale", s},
          {"encoding", std::string(to_string(options.encoding))},
          {"data", encode_frame(frame, options)},
          {"overlay", std::move(overlay)}};
}

json telemetry_message(const json& record) { return {{"type", "telemetry"}, {"record", record}}; }

json redetect_request_message(std::uint64_t seq) { return {{"type", "redetect_request"}, {"seq", seq}}; }

json ack_message(std::string_view of, const std::optional<std::string>& error, const json& id) {
  json j = {{"type", "ack"}, {"of", std::string(of)}, {"status", error ? "error" : "ok"}};
  if (error) j["reason"] = *error;
  if (!id.is_null()) j["id"] = id;
  return j;
}

namespace {

double number(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number()) throw ConfigError(std::string("field '") + key + "' must be a number");
  return j.at(key).get<double>();
}

}  // namespace

ClientMessage parse_client_message(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception&) {
    throw ConfigError("message is not valid JSON");
  }
  if (!j.is_object() || !j.contains("type") || !j.at("type").is_string())
    throw ConfigError("message needs a string 'type'");
  ClientMessage m;
  m.type = j.at("type").get<std::string>();
  if (j.contains("id")) m.id = j.at("id");

  if (m.type == "pause") {
    m.command = PauseCommand{};
  } else if (m.type == "resume") {
    m.command = ResumeCommand{};
  } else if (m.type == "reset") {
    m.command = Event{ResetTrack{}};
  } else if (m.type == "query_click") {
    m.command = Event{SubmitQuery{ClickQuery{number(j, "x"), number(j, "y")}}};
  } else if (m.type == "query_bbox") {
    const BoxQuery b{number(j, "x0"), number(j, "y0"), number(j, "x1"), number(j, "y1")};
    if (!(b.x1 > b.x0) || !(b.y1 > b.y0)) throw ConfigError("bounding box is empty");
    m.command = Event{SubmitQuery{b}};
  } else if (m.type == "query_template") {
    TemplateQuery q;
    q.class_id = static_cast<int>(number(j, "class_id"));
    m.command = Event{SubmitQuery{q}};
  } else if (m.type == "set_redetect_level") {
    const double level = number(j, "level");
    if (level != 1.0 && level != 2.0 && level != 3.0) throw ConfigError("redetect level must be 1, 2 or 3");
    m.command = Event{SetRedetectLevel{static_cast<int>(level)}};
  } else if (m.type == "assist") {
    m.command = Event{AssistNudge{Vec3(number(j, "dx"), number(j, "dy"), number(j, "dz"))}};
  } else {
    throw ConfigError("unknown message type '" + m.type + "'");
  }
  return m;
}

}  // namespace tar
