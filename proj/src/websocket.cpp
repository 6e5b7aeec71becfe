#include "cardioloop/websocket.hpp"

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <algorithm>
#include <cctype>

namespace cardioloop::net::ws {

namespace {

constexpr std::string_view kGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool has_token(std::string_view list, std::string_view token) {
  const std::string l = lower(list);
  std::size_t pos = 0;
  while (pos <= l.size()) {
    const std::size_t comma = std::min(l.find(',', pos), l.size());
    if (trim(std::string_view(l).substr(pos, comma - pos)) == token) return true;
    pos = comma + 1;
  }
  return false;
}

}  // namespace

std::optional<std::string> HttpRequest::header(const std::string& name) const {
  auto it = headers.find(lower(name));
  if (it == headers.end()) return std::nullopt;
  return it->second;
}

bool HttpRequest::is_websocket_upgrade() const {
  const auto upgrade = header("upgrade");
  const auto connection = header("connection");
  return upgrade && connection && lower(*upgrade) == "websocket" && has_token(*connection, "upgrade") &&
         header("sec-websocket-key").has_value();
}

std::optional<HttpRequest> parse_http_request(std::string_view buf, std::size_t& consumed) {
  const std::size_t end = buf.find("\r\n\r\n");
  if (end == std::string_view::npos) return std::nullopt;
  consumed = end + 4;
  std::string_view head = buf.substr(0, end);

  HttpRequest req;
  const std::size_t eol = std::min(head.find("\r\n"), head.size());
  const std::string_view request_line = head.substr(0, eol);
  const std::size_t sp1 = request_line.find(' ');
  const std::size_t sp2 = request_line.find(' ', sp1 == std::string_view::npos ? 0 : sp1 + 1);
  if (sp1 == std::string_view::npos || sp2 == std::string_view::npos) throw WsError("malformed request line");
  req.method = std::string(request_line.substr(0, sp1));
  req.path = std::string(request_line.substr(sp1 + 1, sp2 - sp1 - 1));

  std::size_t pos = eol == head.size() ? head.size() : eol + 2;
  while (pos < head.size()) {
    const std::size_t next = std::min(head.find("\r\n", pos), head.size());
    const std::string_view line = head.substr(pos, next - pos);
    const std::size_t colon = line.find(':');
    if (colon != std::string_view::npos)
      req.headers[lower(trim(line.substr(0, colon)))] = std::string(trim(line.substr(colon + 1)));
    pos = next + 2;
  }
  return req;
}

std::string accept_key(std::string_view client_key) {
  std::string material(client_key);
  material += kGuid;
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(material.data()), material.size(), digest);
  unsigned char out[4 * ((SHA_DIGEST_LENGTH + 2) / 3) + 1];
  const int n = EVP_EncodeBlock(out, digest, SHA_DIGEST_LENGTH);
  return std::string(reinterpret_cast<const char*>(out), static_cast<std::size_t>(n));
}

std::string handshake_response(std::string_view client_key) {
  return "HTTP/1.1 101 Switching Protocols\r\n"
         "Upgrade: websocket\r\n"
         "Connection: Upgrade\r\n"
         "Sec-WebSocket-Accept: " +
         accept_key(client_key) + "\r\n\r\n";
}

std::string encode_frame(Opcode op, std::string_view payload, std::optional<std::uint32_t> mask) {
  std::string out;
  out.reserve(payload.size() + 14);
  out.push_back(static_cast<char>(0x80 | static_cast<std::uint8_t>(op)));
  const std::uint8_t mask_bit = mask ? 0x80 : 0x00;
  const std::size_t n = payload.size();
  if (n < 126) {
    out.push_back(static_cast<char>(mask_bit | n));
  } else if (n <= 0xFFFF) {
    out.push_back(static_cast<char>(mask_bit | 126));
    out.push_back(static_cast<char>((n >> 8) & 0xFF));
    out.push_back(static_cast<char>(n & 0xFF));
  } else {
    out.push_back(static_cast<char>(mask_bit | 127));
    for (int shift = 56; shift >= 0; shift -= 8) out.push_back(static_cast<char>((static_cast<std::uint64_t>(n) >> shift) & 0xFF));
  }
  if (!mask) {
    out.append(payload);
    return out;
  }
  const unsigned char key[4] = {static_cast<unsigned char>(*mask >> 24), static_cast<unsigned char>(*mask >> 16),
                                static_cast<unsigned char>(*mask >> 8), static_cast<unsigned char>(*mask)};
  out.append(reinterpret_cast<const char*>(key), 4);
  for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<char>(payload[i] ^ key[i % 4]));
  return out;
}

std::optional<Decoded> decode_frame(std::string_view buf, std::size_t max_payload) {
  if (buf.size() < 2) return std::nullopt;
  const auto b0 = static_cast<std::uint8_t>(buf[0]);
  const auto b1 = static_cast<std::uint8_t>(buf[1]);
  if (b0 & 0x70) throw WsError("reserved bits set");
  Decoded d;
  d.fin = (b0 & 0x80) != 0;
  d.opcode = static_cast<Opcode>(b0 & 0x0F);
  const bool masked = (b1 & 0x80) != 0;
  std::uint64_t len = b1 & 0x7F;
  std::size_t pos = 2;
  if (len == 126) {
    if (buf.size() < 4) return std::nullopt;
    len = (static_cast<std::uint64_t>(static_cast<std::uint8_t>(buf[2])) << 8) | static_cast<std::uint8_t>(buf[3]);
    pos = 4;
  } else if (len == 127) {
    if (buf.size() < 10) return std::nullopt;
    len = 0;
    for (int i = 0; i < 8; ++i) len = (len << 8) | static_cast<std::uint8_t>(buf[2 + i]);
    pos = 10;
  }
  if (len > max_payload) throw WsError("websocket payload too large");
  unsigned char key[4] = {0, 0, 0, 0};
  if (masked) {
    if (buf.size() < pos + 4) return std::nullopt;
    std::copy_n(reinterpret_cast<const unsigned char*>(buf.data() + pos), 4, key);
    pos += 4;
  }
  if (buf.size() < pos + len) return std::nullopt;
  d.payload.assign(buf.data() + pos, static_cast<std::size_t>(len));
  if (masked)
    for (std::size_t i = 0; i < d.payload.size(); ++i) d.payload[i] = static_cast<char>(d.payload[i] ^ key[i % 4]);
  d.consumed = pos + static_cast<std::size_t>(len);
  return d;
}

}  // namespace cardioloop::net::ws
