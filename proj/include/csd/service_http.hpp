#pragma once

#include <string>

#include "csd/service.hpp"
#include "httplib.h"

namespace csd {

// Routes every request on `server` through Service::handle.
void bind_routes(httplib::Server& server, Service& service);

// Blocks until the server stops.
void serve(Service& service, const std::string& host, int port);

}  // namespace csd
