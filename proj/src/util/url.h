#pragma once

#include <string>
#include <string_view>

#include "sentinel/errors.h"

namespace sentinel::util {

// "http://host:8080/base/" -> origin "http://host:8080", path_prefix "/base".
struct UrlTarget {
  std::string origin;
  std::string path_prefix;
};

inline UrlTarget split_url(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) {
    throw ConfigError("URL needs a scheme (http:// or https://): " + std::string(url));
  }
  const std::string_view scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw ConfigError("unsupported URL scheme '" + std::string(scheme) + "'");
  }
  const auto host_start = scheme_end + 3;
  const auto path_start = url.find('/', host_start);
  UrlTarget out;
  out.origin = std::string(url.substr(0, path_start));
  if (out.origin.size() <= host_start) throw ConfigError("URL has no host: " + std::string(url));
  if (path_start != std::string_view::npos) {
    out.path_prefix = std::string(url.substr(path_start));
    while (!out.path_prefix.empty() && out.path_prefix.back() == '/') {
      out.path_prefix.pop_back();
    }
  }
  return out;
}

}  // namespace sentinel::util
