#include "hablab/error.hpp"

namespace hablab {

namespace {
std::string compose(const std::string& module, const std::string& tag, const std::string& detail) {
    std::string s = module + ": " + tag;
    if (!detail.empty()) s += " (" + detail + ")";
    return s;
}
}  // namespace

Error::Error(ErrorKind kind, std::string module, std::string tag, const std::string& detail)
    : std::runtime_error(compose(module, tag, detail)), kind_(kind), module_(std::move(module)),
      tag_(std::move(tag)) {}

void fail(ErrorKind kind, const std::string& module, const std::string& tag, const std::string& detail) {
    throw Error(kind, module, tag, detail);
}

}  // namespace hablab
