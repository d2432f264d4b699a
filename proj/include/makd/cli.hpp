/*
Copyright 2026 The makd Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "makd/annotate.hpp"

namespace makd::cli {

// Runs exactly one subcommand. Returns 0 on success, 1 on a runtime failure
// (including partially failed annotate/ablate runs) and 2 on a usage error.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Replaces the HTTP endpoint used by annotate, gen-questions --live and
// select --live. Passing an empty function restores the default.
using EndpointFactory =
    std::function<std::unique_ptr<annotate::ChatEndpoint>(const annotate::EndpointConfig&)>;
void set_endpoint_factory(EndpointFactory factory);

}  // namespace makd::cli
