#include "loong/http.hpp"

#include <algorithm>
#include <cmath>
#include <semaphore>

#include <httplib.h>

namespace loong {

using nlohmann::json;

std::chrono::milliseconds RetryPolicy::delay_before(int attempt) const {
  if (attempt <= 1) return std::chrono::milliseconds{0};
  const double scaled =
      static_cast<double>(initial_backoff.count()) * std::pow(multiplier, attempt - 2);
  const auto capped = std::min(scaled, static_cast<double>(max_backoff.count()));
  return std::chrono::milliseconds{static_cast<long long>(capped)};
}

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path without trailing slash
};

ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ValidationError("endpoint URL needs a scheme: '" + url + "'");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  out.origin = url.substr(0, path_start);
  if (path_start != std::string::npos) out.prefix = url.substr(path_start);
  while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  return out;
}

class InFlightGuard {
 public:
  explicit InFlightGuard(std::counting_semaphore<>& sem) : sem_(sem) { sem_.acquire(); }
  ~InFlightGuard() { sem_.release(); }
  InFlightGuard(const InFlightGuard&) = delete;
  InFlightGuard& operator=(const InFlightGuard&) = delete;

 private:
  std::counting_semaphore<>& sem_;
};

}  // namespace

struct JsonHttpClient::Impl {
  HttpEndpoint endpoint;
  ParsedUrl url;
  mutable std::counting_semaphore<> in_flight;

  explicit Impl(HttpEndpoint ep)
      : endpoint(std::move(ep)),
        url(parse_url(endpoint.base_url)),
        in_flight(std::max(1, endpoint.max_in_flight)) {}

  httplib::Client make_client() const {
    httplib::Client cli(url.origin);
    const auto secs = endpoint.timeout.count() / 1000;
    const auto usecs = (endpoint.timeout.count() % 1000) * 1000;
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    if (!endpoint.bearer_token.empty()) cli.set_bearer_token_auth(endpoint.bearer_token);
    return cli;
  }
};

JsonHttpClient::JsonHttpClient(HttpEndpoint endpoint)
    : impl_(std::make_unique<Impl>(std::move(endpoint))) {}
JsonHttpClient::~JsonHttpClient() = default;
JsonHttpClient::JsonHttpClient(JsonHttpClient&&) noexcept = default;
JsonHttpClient& JsonHttpClient::operator=(JsonHttpClient&&) noexcept = default;

const HttpEndpoint& JsonHttpClient::endpoint() const noexcept { return impl_->endpoint; }

JsonHttpClient::Reply JsonHttpClient::post(const std::string& path, const json& payload) const {
  const auto full_path = impl_->url.prefix + path;
  const auto body = payload.dump();
  return with_retries(impl_->endpoint.retry, [&](int attempt) -> Reply {
    InFlightGuard guard(impl_->in_flight);
    auto cli = impl_->make_client();
    auto res = cli.Post(full_path, body, "application/json");
    if (!res) {
      throw BackendError("POST " + full_path + ": " + httplib::to_string(res.error()),
                         /*retryable=*/true);
    }
    if (res->status >= 500) {
      throw BackendError("POST " + full_path + ": HTTP " + std::to_string(res->status), true,
                         res->status, res->body);
    }
    if (res->status >= 400) {
      throw BackendError("POST " + full_path + ": HTTP " + std::to_string(res->status) + ": " +
                             res->body,
                         false, res->status, res->body);
    }
    try {
      return Reply{json::parse(res->body), attempt};
    } catch (const json::parse_error& e) {
      throw BackendError("POST " + full_path + ": response is not JSON: " + e.what(), false,
                         res->status, res->body);
    }
  });
}

std::optional<int> JsonHttpClient::get_status(const std::string& path) const {
  InFlightGuard guard(impl_->in_flight);
  auto cli = impl_->make_client();
  auto res = cli.Get(impl_->url.prefix + path);
  if (!res) return std::nullopt;
  return res->status;
}

}  // namespace loong
