#include <cstdio>
int main() { std::puts("aneusim"); return 0; }
