#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

// Minimal RFC 6455 pieces for the browser gateway: handshake, and text/close/
// ping/pong framing. Each text message carries exactly one protocol frame.
namespace cardioloop::net::ws {

enum class Opcode : std::uint8_t { Continuation = 0x0, Text = 0x1, Binary = 0x2, Close = 0x8, Ping = 0x9, Pong = 0xA };

class WsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct HttpRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> headers;  // lower-cased names

  std::optional<std::string> header(const std::string& name) const;
  bool is_websocket_upgrade() const;
};

// Parses a request head once "\r\n\r\n" has arrived; `consumed` is its length.
std::optional<HttpRequest> parse_http_request(std::string_view buf, std::size_t& consumed);

std::string accept_key(std::string_view client_key);
std::string handshake_response(std::string_view client_key);

// Server frames are unmasked; clients pass a masking key.
std::string encode_frame(Opcode op, std::string_view payload, std::optional<std::uint32_t> mask = std::nullopt);

struct Decoded {
  Opcode opcode = Opcode::Text;
  bool fin = true;
  std::string payload;
  std::size_t consumed = 0;
};

// nullopt while the frame is incomplete. Throws WsError on oversize payloads
// and reserved bits.
std::optional<Decoded> decode_frame(std::string_view buf, std::size_t max_payload);

}  // namespace cardioloop::net::ws
