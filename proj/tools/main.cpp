#include <cstdio>
int main() { std::puts("introdrive: subcommands pending"); return 0; }
