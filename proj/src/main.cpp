#include <exception>
#include <iostream>

#include "jscc/cli.hpp"
#include "jscc/error.hpp"

int main(int argc, char** argv) {
    try {
        return jscc::run_cli(argc, argv);
    } catch (const jscc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return jscc::kExitConfigError;
    } catch (const jscc::CodecUnavailable& e) {
        std::cerr << "codec unavailable: " << e.what() << "\n";
        return jscc::kExitCodecUnavailable;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return jscc::kExitRuntimeError;
    }
}
