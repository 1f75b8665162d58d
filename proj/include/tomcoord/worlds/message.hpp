#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace tomcoord::worlds {

enum class MessageKind { referential, navigation, empty };

// Token sequence with its language (referential) or level (navigation) tag.
struct Message {
  std::vector<int> tokens;
  int tag = -1;
  MessageKind kind = MessageKind::empty;

  static Message empty() { return {}; }
  bool is_empty() const { return kind == MessageKind::empty; }
  friend bool operator==(const Message&, const Message&) = default;
};

class UntaggedMessage : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Referential messages cost their token count; navigation messages of level
// i cost 2^i; the empty message costs 0.
double cost(const Message& m);

std::string to_string(const Message& m);

}  // namespace tomcoord::worlds
