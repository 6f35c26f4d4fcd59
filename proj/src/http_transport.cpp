// before httplib: resolv.h defines a macro named _res
#include "geouq/llm_clients.hpp"

#include <httplib.h>

#include <memory>
#include <mutex>
#include <string>

#include "geouq/error.hpp"

namespace geouq::clients {
namespace {

class HttpTransport final : public Transport {
 public:
  explicit HttpTransport(const std::string& base_url) {
    const auto scheme_end = base_url.find("://");
    if (scheme_end == std::string::npos)
      throw PreconditionError("base_url needs a scheme: " + base_url);
    const auto path_start = base_url.find('/', scheme_end + 3);
    origin_ = base_url.substr(0, path_start);
    if (path_start != std::string::npos) prefix_ = base_url.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  }

  HttpResponse post(const std::string& path, const std::string& json_body,
                    const std::string& bearer_token, double timeout_s) override {
    // httplib::Client is not safe for concurrent use; one per request.
    httplib::Client client(origin_);
    const auto secs = static_cast<time_t>(timeout_s);
    const auto usecs = static_cast<time_t>((timeout_s - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (!bearer_token.empty()) headers.emplace("Authorization", "Bearer " + bearer_token);
    auto res = client.Post(prefix_ + path, headers, json_body, "application/json");
    if (!res) return HttpResponse{0, {}};
    return HttpResponse{res->status, res->body};
  }

 private:
  std::string origin_;
  std::string prefix_;
};

}  // namespace

std::shared_ptr<Transport> make_http_transport(const std::string& base_url) {
  return std::make_shared<HttpTransport>(base_url);
}

}  // namespace geouq::clients
