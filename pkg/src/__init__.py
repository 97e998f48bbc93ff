# Federated QNN toolkit - src package
