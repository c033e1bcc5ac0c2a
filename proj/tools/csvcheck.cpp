// Strict schema check for the CSV files written by qdelta.
// Usage: qdelta-csvcheck FILE [SCHEMA]; SCHEMA defaults to the file name.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "qdelta/csv_schema.hpp"

int main(int argc, char** argv) {
    if (argc < 2 || argc > 3) {
        std::cerr << "usage: qdelta-csvcheck FILE [SCHEMA]\n";
        return 2;
    }
    std::string name = argc == 3 ? argv[2] : std::filesystem::path(argv[1]).filename().string();
    auto it = qdelta::csv_schemas().find(name);
    if (it == qdelta::csv_schemas().end()) {
        std::cerr << "unknown schema '" << name << "'\n";
        return 2;
    }
    std::ifstream f(argv[1]);
    if (!f) {
        std::cerr << "cannot read " << argv[1] << "\n";
        return 2;
    }
    std::stringstream ss;
    ss << f.rdbuf();
    auto bad = qdelta::check_csv(ss.str(), it->second);
    for (const auto& b : bad) std::cerr << argv[1] << ": " << b << "\n";
    return bad.empty() ? 0 : 1;
}
