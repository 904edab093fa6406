#pragma once

#include <chrono>
#include <memory>
#include <string>

#include <httplib.h>
// <resolv.h> defines _res as a macro, which breaks Eigen's product kernels.
#ifdef _res
#undef _res
#endif
#include <json.hpp>

#include "error.hpp"

namespace snt::http {

/// "http://host:port/prefix" split into the parts httplib wants.
struct Endpoint {
    std::string scheme_host_port;
    std::string path_prefix;
};

inline Endpoint parse_endpoint(const std::string& url) {
    constexpr std::string_view scheme = "http://";
    if (url.rfind(scheme, 0) != 0)
        throw Error(ErrorKind::InvalidArgument, "only http:// endpoints are supported: " + url);
    auto slash = url.find('/', scheme.size());
    if (slash == std::string::npos) return {url, ""};
    std::string prefix = url.substr(slash);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {url.substr(0, slash), prefix};
}

enum class Failure { None, Unavailable, Timeout, BadStatus, BadBody };

struct Result {
    Failure failure = Failure::None;
    nlohmann::json body;
    std::string detail;
};

namespace detail {
inline Result finish(const httplib::Result& res) {
    if (!res) {
        auto err = res.error();
        if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout)
            return {Failure::Timeout, {}, httplib::to_string(err)};
        return {Failure::Unavailable, {}, httplib::to_string(err)};
    }
    if (res->status != 200)
        return {Failure::BadStatus, {}, "HTTP status " + std::to_string(res->status)};
    try {
        return {Failure::None, nlohmann::json::parse(res->body), {}};
    } catch (const nlohmann::json::exception& ex) {
        return {Failure::BadBody, {}, ex.what()};
    }
}

inline httplib::Client make_client(const Endpoint& ep, std::chrono::milliseconds timeout) {
    httplib::Client cli(ep.scheme_host_port);
    auto secs = static_cast<time_t>(timeout.count() / 1000);
    auto usecs = static_cast<time_t>((timeout.count() % 1000) * 1000);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    return cli;
}
} // namespace detail

inline Result post_json(const Endpoint& ep, const std::string& path, const nlohmann::json& body,
                        std::chrono::milliseconds timeout) {
    auto cli = detail::make_client(ep, timeout);
    return detail::finish(cli.Post(ep.path_prefix + path, body.dump(), "application/json"));
}

inline Result get_json(const Endpoint& ep, const std::string& path,
                       std::chrono::milliseconds timeout) {
    auto cli = detail::make_client(ep, timeout);
    return detail::finish(cli.Get(ep.path_prefix + path));
}

} // namespace snt::http
