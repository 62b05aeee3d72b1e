#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "tar/perception.hpp"
#include "tar/scenario.hpp"
#include "tar/tracking.hpp"
#include "tar/world.hpp"

namespace tar {

enum class Encoding { Png, Jpeg };

Encoding parse_encoding(std::string_view name);
std::string_view to_string(Encoding e);

/// Standard alphabet with padding.
std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws ConfigError on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

struct EncodeOptions {
  Encoding encoding = Encoding::Png;
  int jpeg_quality = 90;
  /// Output scale (nearest neighbour); 1 streams native resolution.
  double scale = 1.0;
};

/// Compressed image bytes of the frame's grey render.
std::vector<std::uint8_t> encode_image(const Frame& frame, const EncodeOptions& options = {});
/// base64(encode_image(frame)).
std::string encode_frame(const Frame& frame, const EncodeOptions& options = {});

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

/// Inverse of encode_frame. Throws ConfigError if the payload is not an image.
GrayImage decode_frame(std::string_view base64);

/// Outline polygons of a mask (outer and hole boundaries), in pixel units.
std::vector<std::vector<std::pair<int, int>>> mask_outline(const Mask& mask);

/// Server -> client messages.
nlohmann::json frame_message(const Frame& frame, const TrackState& track, const EncodeOptions& options = {});
nlohmann::json telemetry_message(const nlohmann::json& record);
nlohmann::json redetect_request_message(std::uint64_t seq);
nlohmann::json ack_message(std::string_view of, const std::optional<std::string>& error,
                           const nlohmann::json& id = nullptr);

struct PauseCommand {};
struct ResumeCommand {};

/// A decoded client message: session control or a simulation event.
struct ClientMessage {
  std::string type;
  nlohmann::json id;
  std::variant<PauseCommand, ResumeCommand, Event> command;
};

/// Throws ConfigError with a client-facing reason for malformed messages.
ClientMessage parse_client_message(std::string_view text);

}  // namespace tar
