#pragma once

#include <stdexcept>
#include <string>

namespace hablab {

// Exit-code aligned error categories.
enum class ErrorKind { usage = 1, data = 2, numerical = 3 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string module, std::string tag, const std::string& detail = {});

    ErrorKind kind() const { return kind_; }
    const std::string& module() const { return module_; }
    const std::string& tag() const { return tag_; }

private:
    ErrorKind kind_;
    std::string module_;
    std::string tag_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& module, const std::string& tag,
                       const std::string& detail = {});

}  // namespace hablab
