#pragma once

#include <string>

#include <httplib.h>

#include "rlver/gateway.hpp"

namespace rlver {

/// cpp-httplib backed transport. HTTPS requires CPPHTTPLIB_OPENSSL_SUPPORT.
class HttpTransport final : public Transport {
 public:
  HttpResponse post(const std::string& url, const HttpHeaders& headers, const std::string& body,
                    double timeout_seconds) override {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("base_url must include a scheme: " + url);
    auto path_begin = url.find('/', scheme_end + 3);
    std::string origin = url.substr(0, path_begin);
    std::string path = path_begin == std::string::npos ? "/" : url.substr(path_begin);

    httplib::Client client(origin);
    auto secs = static_cast<time_t>(timeout_seconds);
    client.set_connection_timeout(secs);
    client.set_read_timeout(secs);
    httplib::Headers h;
    std::string content_type = "application/json";
    for (const auto& [k, v] : headers) {
      if (k == "Content-Type") {
        content_type = v;
      } else {
        h.emplace(k, v);
      }
    }
    auto res = client.Post(path, h, body, content_type);
    if (!res) return {0, httplib::to_string(res.error())};
    return {res->status, res->body};
  }
};

}  // namespace rlver
