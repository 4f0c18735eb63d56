#pragma once

#include <random>
#include <string>
#include <vector>

namespace fixtures {

/// Random C function built from a small statement grammar that mixes
/// catalog calls, arithmetic, pointer and array accesses.
inline std::string random_function(std::mt19937_64& rng, std::size_t max_statements = 40) {
  static const std::vector<std::string> calls = {"malloc", "free",   "strcpy", "memcpy",
                                                 "printf", "strlen", "helper", "realloc"};
  static const std::vector<std::string> ops = {"+", "-", "*", "/", "%", "<<", "&", "|"};
  static const std::vector<std::string> vars = {"a", "b", "n", "idx", "len"};
  auto pick = [&](const std::vector<std::string>& v) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
  };
  std::uniform_int_distribution<std::size_t> count(1, max_statements);
  std::uniform_int_distribution<int> kind(0, 6);
  std::string code = "int f(int a, int b, char *p, struct s *q) {\n  int n = 0, idx = 1, len = 2;\n";
  const std::size_t statements = count(rng);
  for (std::size_t i = 0; i < statements; ++i) {
    switch (kind(rng)) {
      case 0: code += "  " + pick(calls) + "(p, " + pick(vars) + ");\n"; break;
      case 1: code += "  n = " + pick(vars) + " " + pick(ops) + " " + pick(vars) + ";\n"; break;
      case 2: code += "  p[" + pick(vars) + "] = *p;\n"; break;
      case 3: code += "  q->field = " + pick(vars) + ";\n"; break;
      case 4: code += "  if (" + pick(vars) + " > 3) { idx++; }\n"; break;
      case 5: code += "  len += " + pick(vars) + ";\n"; break;
      default: code += "  return " + pick(vars) + ";\n"; break;
    }
  }
  code += "  return n;\n}\n";
  return code;
}

}  // namespace fixtures
