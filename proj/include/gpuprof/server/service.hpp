#pragma once

// Read-only JSON endpoints over one database; see API.md.

#include <map>
#include <string>

#include "gpuprof/analysis/database.hpp"

namespace httplib {
class Server;
}

namespace gpuprof::server {

struct Response {
  int status = 200;
  std::string body;  // JSON
};

using Params = std::multimap<std::string, std::string>;

class Service {
 public:
  explicit Service(const analysis::Database& db) : db_(db) {}

  /// Routes one request. Unknown ids answer 404, malformed input 400.
  Response handle(const std::string& method, const std::string& path, const Params& params,
                  const std::string& body) const;

  /// Registers the routes on an httplib server.
  void mount(httplib::Server& server) const;

 private:
  const analysis::Database& db_;
};

}  // namespace gpuprof::server
