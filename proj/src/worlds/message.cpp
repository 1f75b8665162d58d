#include "tomcoord/worlds/message.hpp"

#include <cmath>

namespace tomcoord::worlds {

double cost(const Message& m) {
  switch (m.kind) {
    case MessageKind::empty:
      return 0.0;
    case MessageKind::referential:
      if (m.tag < 0) throw UntaggedMessage("referential message without language tag");
      return static_cast<double>(m.tokens.size());
    case MessageKind::navigation:
      if (m.tag < 1 || m.tag > 4) throw UntaggedMessage("navigation message without level tag");
      return std::ldexp(1.0, m.tag);
  }
  throw UntaggedMessage("unknown message kind");
}

std::string to_string(const Message& m) {
  if (m.is_empty()) return "<empty>";
  std::string s = (m.kind == MessageKind::referential ? "L" : "I") + std::to_string(m.tag) + ":";
  for (std::size_t i = 0; i < m.tokens.size(); ++i) {
    s += (i ? " " : "") + std::to_string(m.tokens[i]);
  }
  return s;
}

}  // namespace tomcoord::worlds
