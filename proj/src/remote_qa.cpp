// Eigen must come before httplib: <resolv.h> defines a `_res` macro that
// collides with Eigen parameter names.
#include "argus/hash.hpp"
#include "argus/query.hpp"
#include "argus/text.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <json.hpp>

namespace argus::query {

std::string remote_qa(std::string_view question, std::string_view table, const RemoteQaConfig& config,
                      const QaLogger& log) {
  config.validate();
  const auto scheme_end = config.url.find("://") + 3;
  const auto path_start = config.url.find('/', scheme_end);
  const std::string origin = config.url.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : config.url.substr(path_start);

  httplib::Client client(origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  httplib::Headers headers;
  if (config.auth_token) headers.emplace("Authorization", "Bearer " + *config.auth_token);
  const std::string body = nlohmann::json{{"question", question}, {"table", table}}.dump();

  QaExchange exchange{config.url, std::string(question), sha256_hex(table), 0, "", {}};
  const auto started = std::chrono::steady_clock::now();
  auto res = client.Post(path, headers, body, "application/json");
  exchange.elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);

  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout)
      fail(Errc::Timeout, "QA endpoint did not answer within " + std::to_string(config.timeout.count()) + " ms",
           config.timeout.count());
    fail(Errc::IoFailure, "QA request to " + config.url + " failed: " + httplib::to_string(err));
  }
  exchange.status = res->status;
  if (res->status < 200 || res->status >= 300) {
    if (log) log(exchange);
    fail(Errc::HttpError, "QA endpoint returned HTTP " + std::to_string(res->status), res->status);
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception&) {
    fail(Errc::MalformedResponse, "QA response is not JSON");
  }
  if (!doc.is_object() || !doc.contains("answer") || !doc["answer"].is_string())
    fail(Errc::MalformedResponse, "QA response lacks a string \"answer\"");
  exchange.answer = doc["answer"].get<std::string>();
  if (log) log(exchange);
  return exchange.answer;
}

}  // namespace argus::query
